//! Three-class gradient-boosted regression trees with a softmax objective
//! and exact greedy splits.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::ErrorClass;
use crate::error::{Error, Result};

pub const FOREST_FORMAT_VERSION: u32 = 1;
const N_CLASSES: usize = 3;
const MIN_HESSIAN: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbrtParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Minimum hessian cover of a child created by a split.
    pub min_child_weight: f64,
    /// Fraction of features drawn at each node.
    pub colsample_bynode: f64,
    /// L2 penalty on leaf values.
    pub reg_lambda: f64,
}

impl Default for GbrtParams {
    fn default() -> Self {
        Self {
            n_rounds: 3,
            max_depth: 8,
            learning_rate: 1.0,
            min_child_weight: 25.0,
            colsample_bynode: 0.85,
            reg_lambda: 1.0,
        }
    }
}

impl GbrtParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 {
            return Err(Error::param("n_rounds", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", format!("{}", self.learning_rate)));
        }
        if !(self.min_child_weight >= 0.0 && self.min_child_weight.is_finite()) {
            return Err(Error::param("min_child_weight", format!("{}", self.min_child_weight)));
        }
        if !(self.colsample_bynode > 0.0 && self.colsample_bynode <= 1.0) {
            return Err(Error::param("colsample_bynode", format!("{}", self.colsample_bynode)));
        }
        if !(self.reg_lambda >= 0.0 && self.reg_lambda.is_finite()) {
            return Err(Error::param("reg_lambda", format!("{}", self.reg_lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub features: Vec<f64>,
    pub label: ErrorClass,
    /// Oversampling multiplicity, used as the sample weight.
    pub replication: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    /// Rows with `x[feature] < threshold` go left.
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    /// Leaf output (already scaled by the learning rate); unused on splits.
    pub value: f64,
    /// Sum of hessians of the training rows reaching the node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cover: Option<f64>,
}

/// Nodes in pre-order; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Self { nodes: vec![TreeNode { split: None, value, cover: Some(cover) }] }
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        while let Some(s) = self.nodes[i].split {
            i = if x[s.feature] < s.threshold { s.left } else { s.right };
        }
        i
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_index(x)].value
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, i: usize) -> usize {
            match t.nodes[i].split {
                None => 0,
                Some(s) => 1 + go(t, s.left).max(go(t, s.right)),
            }
        }
        go(self, 0)
    }

    pub fn has_covers(&self) -> bool {
        self.nodes.iter().all(|n| n.cover.is_some())
    }

    pub fn features_used(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| n.split.map(|s| s.feature))
    }
}

/// Softmax-boosted forest: `trees[round][class]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedForest {
    pub version: u32,
    pub params: GbrtParams,
    pub seed: u64,
    pub n_features: usize,
    pub base_score: f64,
    pub trees: Vec<Vec<RegressionTree>>,
    /// Set when the training data held a single class.
    #[serde(default)]
    pub constant_class: Option<ErrorClass>,
}

impl BoostedForest {
    /// Raw per-class margins.
    pub fn margins(&self, x: &[f64]) -> [f64; N_CLASSES] {
        let mut m = [self.base_score; N_CLASSES];
        for round in &self.trees {
            for (k, tree) in round.iter().enumerate() {
                m[k] += tree.predict(x);
            }
        }
        m
    }

    /// Argmax of the margins; any tie at the maximum yields the neutral class.
    pub fn predict_class(&self, x: &[f64]) -> (ErrorClass, [f64; N_CLASSES]) {
        let m = self.margins(x);
        let max = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let winners: Vec<usize> = (0..N_CLASSES).filter(|&k| m[k] == max).collect();
        let class = if winners.len() == 1 {
            ErrorClass::from_index(winners[0]).expect("three classes")
        } else {
            ErrorClass::Neutral
        };
        (class, m)
    }

    pub fn class_trees(&self, class: ErrorClass) -> impl Iterator<Item = &RegressionTree> {
        self.trees.iter().map(move |r| &r[class.index()])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(s)?;
        if f.version != FOREST_FORMAT_VERSION {
            return Err(Error::param("version", format!("unsupported forest version {}", f.version)));
        }
        if f.trees.iter().any(|r| r.len() != N_CLASSES) {
            return Err(Error::param("trees", "every round needs one tree per class"));
        }
        Ok(f)
    }
}

/// Identical (features, label) rows merged into one weighted row, keeping
/// first-occurrence order, so that a replicated row and its physical copies
/// train the same forest.
fn coalesce(samples: &[TrainingSample]) -> (Vec<&[f64]>, Vec<usize>, Vec<f64>) {
    let mut index: HashMap<(usize, Vec<u64>), usize> = HashMap::new();
    let mut rows: Vec<&[f64]> = Vec::new();
    let mut labels = Vec::new();
    let mut weights: Vec<u64> = Vec::new();
    for s in samples {
        let key = (s.label.index(), s.features.iter().map(|v| v.to_bits()).collect());
        match index.get(&key) {
            Some(&i) => weights[i] += u64::from(s.replication),
            None => {
                index.insert(key, rows.len());
                rows.push(&s.features);
                labels.push(s.label.index());
                weights.push(u64::from(s.replication));
            }
        }
    }
    (rows, labels, weights.into_iter().map(|w| w as f64).collect())
}

struct TreeBuilder<'a> {
    rows: &'a [&'a [f64]],
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GbrtParams,
    n_features: usize,
    rng: &'a mut ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl TreeBuilder<'_> {
    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -g / (h + self.params.reg_lambda) * self.params.learning_rate
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.params.reg_lambda)
    }

    fn draw_features(&mut self) -> Vec<usize> {
        let k = ((self.params.colsample_bynode * self.n_features as f64).ceil() as usize)
            .clamp(1, self.n_features);
        let mut f = rand::seq::index::sample(self.rng, self.n_features, k).into_vec();
        f.sort_unstable();
        f
    }

    fn best_split(&self, idx: &[usize], features: &[usize], g: f64, h: f64) -> Option<Candidate> {
        let mcw = self.params.min_child_weight;
        let parent = self.score(g, h);
        let mut best: Option<Candidate> = None;
        let mut order = idx.to_vec();
        for &f in features {
            order.sort_by(|&a, &b| self.rows[a][f].total_cmp(&self.rows[b][f]).then(a.cmp(&b)));
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..order.len() - 1 {
                let i = order[w];
                gl += self.grad[i];
                hl += self.hess[i];
                let lo = self.rows[i][f];
                let hi = self.rows[order[w + 1]][f];
                if lo == hi {
                    continue;
                }
                let (gr, hr) = (g - gl, h - hl);
                if hl < mcw || hr < mcw {
                    continue;
                }
                let gain = self.score(gl, hl) + self.score(gr, hr) - parent;
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid > lo { mid } else { hi };
                    best = Some(Candidate { gain, feature: f, threshold });
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: &[usize], depth: usize) -> usize {
        let g: f64 = idx.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = idx.iter().map(|&i| self.hess[i]).sum();
        let id = self.nodes.len();
        self.nodes.push(TreeNode { split: None, value: self.leaf_value(g, h), cover: Some(h) });
        if depth >= self.params.max_depth || idx.len() < 2 || h < 2.0 * self.params.min_child_weight {
            return id;
        }
        let features = self.draw_features();
        let Some(c) = self.best_split(idx, &features, g, h) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.rows[i][c.feature] < c.threshold);
        let left = self.grow(&l, depth + 1);
        let right = self.grow(&r, depth + 1);
        self.nodes[id].split = Some(Split { feature: c.feature, threshold: c.threshold, left, right });
        self.nodes[id].value = 0.0;
        id
    }
}

fn softmax(m: &[f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let max = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = m.map(|v| (v - max).exp());
    let z: f64 = e.iter().sum();
    e.map(|v| v / z)
}

/// Trains the softmax-boosted forest.
///
/// Each round computes softmax gradients and hessians at the current
/// margins, then fits one tree per class. The forest is a deterministic
/// function of `(samples, params, seed)`.
pub fn train_forest(samples: &[TrainingSample], params: &GbrtParams, seed: u64) -> Result<BoostedForest> {
    params.validate()?;
    let Some(first) = samples.first() else {
        return Err(Error::Empty("training samples"));
    };
    let n_features = first.features.len();
    if n_features == 0 {
        return Err(Error::Empty("feature vector"));
    }
    if let Some(s) = samples.iter().find(|s| s.features.len() != n_features) {
        return Err(Error::DimensionMismatch { expected: n_features, got: s.features.len() });
    }
    if samples.iter().any(|s| s.features.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("training features"));
    }
    if samples.iter().any(|s| s.replication == 0) {
        return Err(Error::param("replication", "must be at least 1"));
    }

    let (rows, labels, weights) = coalesce(samples);
    let total_weight: f64 = weights.iter().sum();

    if labels.iter().all(|&l| l == labels[0]) {
        let class = ErrorClass::from_index(labels[0]).expect("label in range");
        log::debug!("single-class training set; emitting constant forest for {class:?}");
        let round = (0..N_CLASSES)
            .map(|k| RegressionTree::leaf(if k == labels[0] { 1.0 } else { 0.0 }, total_weight))
            .collect();
        return Ok(BoostedForest {
            version: FOREST_FORMAT_VERSION,
            params: params.clone(),
            seed,
            n_features,
            base_score: 0.0,
            trees: vec![round],
            constant_class: Some(class),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..rows.len()).collect();
    let mut margins = vec![[0.0; N_CLASSES]; rows.len()];
    let mut trees = Vec::with_capacity(params.n_rounds);
    for _ in 0..params.n_rounds {
        let probs: Vec<[f64; N_CLASSES]> = margins.iter().map(softmax).collect();
        let mut round = Vec::with_capacity(N_CLASSES);
        for k in 0..N_CLASSES {
            let grad: Vec<f64> = (0..rows.len())
                .map(|i| {
                    let y = if labels[i] == k { 1.0 } else { 0.0 };
                    (probs[i][k] - y) * weights[i]
                })
                .collect();
            let hess: Vec<f64> = (0..rows.len())
                .map(|i| (2.0 * probs[i][k] * (1.0 - probs[i][k])).max(MIN_HESSIAN) * weights[i])
                .collect();
            let mut builder = TreeBuilder {
                rows: &rows,
                grad: &grad,
                hess: &hess,
                params,
                n_features,
                rng: &mut rng,
                nodes: Vec::new(),
            };
            builder.grow(&all, 0);
            round.push(RegressionTree { nodes: builder.nodes });
        }
        for (i, m) in margins.iter_mut().enumerate() {
            for (k, tree) in round.iter().enumerate() {
                m[k] += tree.predict(rows[i]);
            }
        }
        trees.push(round);
    }
    Ok(BoostedForest {
        version: FOREST_FORMAT_VERSION,
        params: params.clone(),
        seed,
        n_features,
        base_score: 0.0,
        trees,
        constant_class: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn clusters(seed: u64, per_class: usize) -> Vec<TrainingSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for (c, center) in [(ErrorClass::Negative, -5.0), (ErrorClass::Neutral, 0.0), (ErrorClass::Positive, 5.0)] {
            for _ in 0..per_class {
                out.push(TrainingSample {
                    features: vec![center + rng.gen_range(-1.0..1.0), rng.gen_range(-3.0..3.0)],
                    label: c,
                    replication: 1,
                });
            }
        }
        out
    }

    #[test]
    fn single_class_is_constant() {
        let samples: Vec<_> = (0..10)
            .map(|i| TrainingSample { features: vec![i as f64], label: ErrorClass::Positive, replication: 1 })
            .collect();
        let f = train_forest(&samples, &GbrtParams::default(), 1).unwrap();
        assert_eq!(f.constant_class, Some(ErrorClass::Positive));
        for x in [-100.0, 0.0, 3.0, 1e9] {
            assert_eq!(f.predict_class(&[x]).0, ErrorClass::Positive);
        }
    }

    #[test]
    fn separable_clusters() {
        let samples = clusters(7, 100);
        let f = train_forest(&samples, &GbrtParams::default(), 42).unwrap();
        let correct = samples.iter().filter(|s| f.predict_class(&s.features).0 == s.label).count();
        assert!(correct as f64 / samples.len() as f64 >= 0.95);
        assert_eq!(f.predict_class(&[-5.0, 0.0]).0, ErrorClass::Negative);
        assert_eq!(f.predict_class(&[0.0, 0.0]).0, ErrorClass::Neutral);
        assert_eq!(f.predict_class(&[5.0, 0.0]).0, ErrorClass::Positive);
    }

    #[test]
    fn deterministic() {
        let samples = clusters(3, 60);
        let a = train_forest(&samples, &GbrtParams::default(), 9).unwrap();
        let b = train_forest(&samples, &GbrtParams::default(), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn structural_limits() {
        let samples = clusters(11, 120);
        let params = GbrtParams { max_depth: 3, min_child_weight: 10.0, ..Default::default() };
        let f = train_forest(&samples, &params, 5).unwrap();
        for round in &f.trees {
            for tree in round {
                assert!(tree.depth() <= 3);
                for (i, n) in tree.nodes.iter().enumerate() {
                    if i > 0 && n.split.is_none() {
                        assert!(n.cover.unwrap() >= 10.0);
                    }
                }
            }
        }
    }

    #[test]
    fn tie_goes_neutral() {
        let f = BoostedForest {
            version: FOREST_FORMAT_VERSION,
            params: GbrtParams::default(),
            seed: 0,
            n_features: 1,
            base_score: 0.0,
            trees: vec![vec![RegressionTree::leaf(0.1, 1.0), RegressionTree::leaf(0.1, 1.0), RegressionTree::leaf(0.1, 1.0)]],
            constant_class: None,
        };
        assert_eq!(f.predict_class(&[0.0]).0, ErrorClass::Neutral);
        let g = BoostedForest {
            trees: vec![vec![RegressionTree::leaf(0.5, 1.0), RegressionTree::leaf(0.1, 1.0), RegressionTree::leaf(0.5, 1.0)]],
            ..f
        };
        assert_eq!(g.predict_class(&[0.0]).0, ErrorClass::Neutral);
    }

    #[test]
    fn json_round_trip() {
        let f = train_forest(&clusters(1, 40), &GbrtParams::default(), 3).unwrap();
        let back = BoostedForest::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(f, back);
        let bad = f.to_json().unwrap().replace("\"version\": 1", "\"version\": 99");
        assert!(BoostedForest::from_json(&bad).is_err());
    }

    #[test]
    fn input_validation() {
        assert!(train_forest(&[], &GbrtParams::default(), 0).is_err());
        let s = vec![
            TrainingSample { features: vec![1.0], label: ErrorClass::Neutral, replication: 1 },
            TrainingSample { features: vec![1.0, 2.0], label: ErrorClass::Positive, replication: 1 },
        ];
        assert!(train_forest(&s, &GbrtParams::default(), 0).is_err());
        let bad = GbrtParams { colsample_bynode: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
