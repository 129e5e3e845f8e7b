//! Verification scores: RMSE, Q95 of the absolute error, confusion matrices,
//! the Gerrity equitable skill score and Peirce skill scores, plus the
//! cross-validated hyperparameter grid search.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::ErrorClass;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::wakeup::{train_forest, GbrtParams, TrainingSample};

pub fn rmse<T: Scalar>(errors: &[T]) -> Result<T> {
    if errors.is_empty() {
        return Err(Error::Empty("errors"));
    }
    let ss: T = errors.iter().map(|&e| e * e).sum();
    Ok((ss / T::from_count(errors.len())).sqrt())
}

/// Empirical quantile of `|errors|`: with sorted values `v_0..v_{n-1}`,
/// `h = (n − 1)·q` and the result is `v_⌊h⌋ + (h − ⌊h⌋)(v_⌊h⌋+1 − v_⌊h⌋)`.
pub fn quantile_abs_error<T: Scalar>(errors: &[T], q: T) -> Result<T> {
    if errors.is_empty() {
        return Err(Error::Empty("errors"));
    }
    if !(q >= T::zero() && q <= T::one()) {
        return Err(Error::param("q", format!("{q} outside [0, 1]")));
    }
    let mut abs: Vec<T> = errors.iter().map(|e| e.abs()).collect();
    if abs.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("errors"));
    }
    abs.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let h = T::from_count(abs.len() - 1) * q;
    let lo = h.floor();
    let i = lo.to_usize().expect("index fits");
    if i + 1 >= abs.len() {
        return Ok(abs[abs.len() - 1]);
    }
    Ok(abs[i] + (h - lo) * (abs[i + 1] - abs[i]))
}

/// `counts[predicted][observed]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        Self { counts: vec![vec![0; k]; k] }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k < 2 {
            return Err(Error::param("counts", "need at least two categories"));
        }
        if let Some(row) = counts.iter().find(|r| r.len() != k) {
            return Err(Error::DimensionMismatch { expected: k, got: row.len() });
        }
        Ok(Self { counts })
    }

    /// Three-class matrix from (predicted, observed) pairs.
    pub fn from_classes(pairs: impl IntoIterator<Item = (ErrorClass, ErrorClass)>) -> Self {
        let mut m = Self::zeros(3);
        for (p, o) in pairs {
            m.add(p.index(), o.index());
        }
        m
    }

    pub fn add(&mut self, predicted: usize, observed: usize) {
        self.counts[predicted][observed] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn observed_marginals(&self) -> Vec<u64> {
        (0..self.k()).map(|e| self.counts.iter().map(|r| r[e]).sum()).collect()
    }

    /// Merges every category never observed into its lower neighbour (the
    /// upper one for the first category), rows and columns alike. The flag
    /// is set when anything was merged.
    pub fn collapse_absent(&self) -> (ConfusionMatrix, bool) {
        let mut groups: Vec<Vec<usize>> = (0..self.k()).map(|i| vec![i]).collect();
        let marg = self.observed_marginals();
        let mut collapsed = false;
        let mut i = 0;
        while i < groups.len() && groups.len() > 1 {
            let present = groups[i].iter().any(|&c| marg[c] > 0);
            if present {
                i += 1;
                continue;
            }
            collapsed = true;
            let g = groups.remove(i);
            let target = if i > 0 { i - 1 } else { 0 };
            groups[target].extend(g);
            i = i.saturating_sub(1);
        }
        let k = groups.len();
        let mut counts = vec![vec![0; k]; k];
        for (gi, gp) in groups.iter().enumerate() {
            for (gj, go) in groups.iter().enumerate() {
                counts[gi][gj] = gp.iter().flat_map(|&p| go.iter().map(move |&o| (p, o))).map(|(p, o)| self.counts[p][o]).sum();
            }
        }
        (ConfusionMatrix { counts }, collapsed)
    }

    fn probabilities<T: Scalar>(&self) -> Result<Vec<Vec<T>>> {
        let n = self.total();
        if n == 0 {
            return Err(Error::Empty("confusion matrix"));
        }
        let n = T::from_u64(n).expect("count fits");
        Ok(self
            .counts
            .iter()
            .map(|r| r.iter().map(|&c| T::from_u64(c).expect("count fits") / n).collect())
            .collect())
    }
}

/// Symmetric Gerrity scoring matrix for the given climatology.
pub fn gerrity_scoring_matrix<T: Scalar>(climatology: &[T]) -> Result<Vec<Vec<T>>> {
    let k = climatology.len();
    if k < 2 {
        return Err(Error::param("climatology", "need at least two categories"));
    }
    if let Some(c) = climatology.iter().position(|&p| !(p > T::zero())) {
        return Err(Error::ZeroMarginal { class: c + 1 });
    }
    let total: T = climatology.iter().copied().sum();
    if (total - T::one()).abs() > T::lit(1e-9) {
        return Err(Error::NotSimplex(format!("climatology sums to {total}")));
    }
    // a_r for r = 1..K−1 from cumulative probabilities.
    let mut cum = T::zero();
    let a: Vec<T> = climatology[..k - 1]
        .iter()
        .map(|&p| {
            cum = cum + p;
            (T::one() - cum) / cum
        })
        .collect();
    let scale = T::one() / T::from_count(k - 1);
    let mut s = vec![vec![T::zero(); k]; k];
    for i in 0..k {
        for j in i..k {
            let inv: T = a[..i].iter().map(|&v| T::one() / v).sum();
            let direct: T = a[j..].iter().copied().sum();
            let v = scale * (inv - T::from_count(j - i) + direct);
            s[i][j] = v;
            s[j][i] = v;
        }
    }
    Ok(s)
}

/// Gerrity equitable skill score with the observed climatology.
pub fn ess<T: Scalar>(matrix: &ConfusionMatrix) -> Result<T> {
    let p = matrix.probabilities::<T>()?;
    let k = matrix.k();
    let clim: Vec<T> = (0..k).map(|e| p.iter().map(|r| r[e]).sum()).collect();
    let s = gerrity_scoring_matrix(&clim)?;
    Ok(p.iter().zip(&s).flat_map(|(pr, sr)| pr.iter().zip(sr).map(|(&a, &b)| a * b)).sum())
}

/// Peirce skill score of the two-category problem split between categories
/// `threshold` and `threshold + 1` (1-based, `1 ≤ threshold < K`).
pub fn peirce_skill_score<T: Scalar>(matrix: &ConfusionMatrix, threshold: usize) -> Result<T> {
    let k = matrix.k();
    if threshold == 0 || threshold >= k {
        return Err(Error::param("threshold", format!("{threshold} outside 1..{k}")));
    }
    let c = matrix.counts();
    let cell = |pl: bool, ol: bool| -> T {
        let mut n = 0u64;
        for (p, row) in c.iter().enumerate() {
            for (o, &v) in row.iter().enumerate() {
                if (p < threshold) == pl && (o < threshold) == ol {
                    n += v;
                }
            }
        }
        T::from_u64(n).expect("count fits")
    };
    let (a, b, cc, d) = (cell(true, true), cell(true, false), cell(false, true), cell(false, false));
    let obs_low = a + cc;
    let obs_high = b + d;
    if obs_low == T::zero() {
        return Err(Error::ZeroMarginal { class: threshold });
    }
    if obs_high == T::zero() {
        return Err(Error::ZeroMarginal { class: threshold + 1 });
    }
    Ok((a * d - b * cc) / (obs_low * obs_high))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierScores {
    pub ess: f64,
    pub pss_per_threshold: Vec<f64>,
    /// P(ê = 1 | e = 1) and P(ê = 3 | e = 3); `None` when never observed.
    pub hit_rate_negative: Option<f64>,
    pub hit_rate_positive: Option<f64>,
    /// Absent observed classes were merged before scoring.
    pub collapsed: bool,
    pub confusion: ConfusionMatrix,
}

impl ClassifierScores {
    /// `None` when fewer than two classes were observed.
    pub fn from_matrix(m: &ConfusionMatrix) -> Option<Self> {
        let (c, collapsed) = m.collapse_absent();
        if c.k() < 2 || c.total() == 0 {
            return None;
        }
        let ess = ess::<f64>(&c).ok()?;
        let pss = (1..c.k()).map(|r| peirce_skill_score::<f64>(&c, r)).collect::<Result<Vec<_>>>().ok()?;
        let marg = m.observed_marginals();
        let hit = |i: usize| (marg[i] > 0).then(|| m.counts()[i][i] as f64 / marg[i] as f64);
        Some(Self {
            ess,
            pss_per_threshold: pss,
            hit_rate_negative: hit(0),
            hit_rate_positive: hit(m.k() - 1),
            collapsed,
            confusion: m.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub n: usize,
    pub rmse: f64,
    pub q95_abs_error: f64,
    pub classifier: Option<ClassifierScores>,
}

impl ScoreReport {
    pub fn new(errors: &[f64], confusion: Option<&ConfusionMatrix>) -> Result<Self> {
        Ok(Self {
            n: errors.len(),
            rmse: rmse(errors)?,
            q95_abs_error: quantile_abs_error(errors, 0.95)?,
            classifier: confusion.and_then(ClassifierScores::from_matrix),
        })
    }
}

/// Lists of candidate values; combinations enumerate in lexicographic order
/// with `n_rounds` varying slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub n_rounds: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub min_child_weight: Vec<f64>,
    pub colsample_bynode: Vec<f64>,
    #[serde(default = "default_lambda")]
    pub reg_lambda: f64,
}

fn default_lambda() -> f64 {
    1.0
}

impl HyperGrid {
    /// The full tuning grid: 7·7·9·7·6 = 18522 combinations.
    pub fn tuning() -> Self {
        Self {
            n_rounds: (1..=7).collect(),
            max_depth: (4..=10).collect(),
            learning_rate: vec![0.2, 0.3, 0.5, 0.7, 0.9, 0.95, 0.98, 0.99, 1.0],
            min_child_weight: vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0],
            colsample_bynode: vec![0.65, 0.7, 0.75, 0.8, 0.85, 0.9],
            reg_lambda: 1.0,
        }
    }

    pub fn single(p: &GbrtParams) -> Self {
        Self {
            n_rounds: vec![p.n_rounds],
            max_depth: vec![p.max_depth],
            learning_rate: vec![p.learning_rate],
            min_child_weight: vec![p.min_child_weight],
            colsample_bynode: vec![p.colsample_bynode],
            reg_lambda: p.reg_lambda,
        }
    }

    pub fn len(&self) -> usize {
        self.n_rounds.len()
            * self.max_depth.len()
            * self.learning_rate.len()
            * self.min_child_weight.len()
            * self.colsample_bynode.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn combination(&self, mut i: usize) -> GbrtParams {
        let c = self.colsample_bynode[i % self.colsample_bynode.len()];
        i /= self.colsample_bynode.len();
        let w = self.min_child_weight[i % self.min_child_weight.len()];
        i /= self.min_child_weight.len();
        let lr = self.learning_rate[i % self.learning_rate.len()];
        i /= self.learning_rate.len();
        let d = self.max_depth[i % self.max_depth.len()];
        i /= self.max_depth.len();
        GbrtParams {
            n_rounds: self.n_rounds[i],
            max_depth: d,
            learning_rate: lr,
            min_child_weight: w,
            colsample_bynode: c,
            reg_lambda: self.reg_lambda,
        }
    }

    pub fn combinations(&self) -> impl Iterator<Item = GbrtParams> + '_ {
        (0..self.len()).map(|i| self.combination(i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub index: usize,
    pub params: GbrtParams,
    pub ess: Option<f64>,
    /// Some observed class was absent and merged before scoring.
    pub collapsed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: GbrtParams,
    pub best_index: usize,
    /// In grid order.
    pub rows: Vec<GridRow>,
}

/// Contiguous blocks `[start, end)` splitting `n` items into `folds` parts.
pub fn blocked_folds(n: usize, folds: usize) -> Vec<(usize, usize)> {
    (0..folds).map(|f| (f * n / folds, (f + 1) * n / folds)).collect()
}

fn cross_validated_confusion(
    streams: &[Vec<TrainingSample>],
    params: &GbrtParams,
    folds: usize,
    seed: u64,
) -> Result<ConfusionMatrix> {
    let mut pooled = ConfusionMatrix::zeros(3);
    let blocks: Vec<Vec<(usize, usize)>> = streams.iter().map(|s| blocked_folds(s.len(), folds)).collect();
    for f in 0..folds {
        let mut train = Vec::new();
        for (s, b) in streams.iter().zip(&blocks) {
            let (lo, hi) = b[f];
            train.extend(s[..lo].iter().cloned());
            train.extend(s[hi..].iter().cloned());
        }
        if train.is_empty() {
            continue;
        }
        let forest = train_forest(&train, params, seed)?;
        for (s, b) in streams.iter().zip(&blocks) {
            let (lo, hi) = b[f];
            for sample in &s[lo..hi] {
                let (pred, _) = forest.predict_class(&sample.features);
                pooled.add(pred.index(), sample.label.index());
            }
        }
    }
    Ok(pooled)
}

/// k-fold blocked cross-validation of every grid combination. Confusion
/// counts are pooled over streams and folds before the ESS is taken; test
/// rows count once whatever their replication. Ties go to the earliest
/// combination.
pub fn grid_search(streams: &[Vec<TrainingSample>], grid: &HyperGrid, folds: usize, seed: u64) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::Empty("hyperparameter grid"));
    }
    if folds < 2 {
        return Err(Error::param("folds", "need at least two folds"));
    }
    if streams.iter().all(|s| s.is_empty()) {
        return Err(Error::Empty("training streams"));
    }
    let rows: Vec<GridRow> = (0..grid.len())
        .into_par_iter()
        .map(|index| {
            let params = grid.combination(index);
            params.validate()?;
            let m = cross_validated_confusion(streams, &params, folds, seed)?;
            let scores = ClassifierScores::from_matrix(&m);
            Ok(GridRow {
                index,
                params,
                ess: scores.as_ref().map(|s| s.ess),
                collapsed: scores.is_none_or(|s| s.collapsed),
            })
        })
        .collect::<Result<_>>()?;
    let mut best_index = 0;
    let mut best = f64::NEG_INFINITY;
    for r in &rows {
        if let Some(e) = r.ess {
            if e > best {
                best = e;
                best_index = r.index;
            }
        }
    }
    Ok(GridResult { best: rows[best_index].params.clone(), best_index, rows })
}

impl GridResult {
    /// Rows by descending ESS (unscored last), grid order within ties.
    pub fn sorted_rows(&self) -> Vec<&GridRow> {
        let mut v: Vec<&GridRow> = self.rows.iter().collect();
        v.sort_by(|a, b| {
            let ka = a.ess.unwrap_or(f64::NEG_INFINITY);
            let kb = b.ess.unwrap_or(f64::NEG_INFINITY);
            kb.partial_cmp(&ka).expect("finite ess").then(a.index.cmp(&b.index))
        });
        v
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "index",
            "n_rounds",
            "max_depth",
            "learning_rate",
            "min_child_weight",
            "colsample_bynode",
            "ess",
            "collapsed",
        ])?;
        for r in self.sorted_rows() {
            let p = &r.params;
            w.write_record([
                r.index.to_string(),
                p.n_rounds.to_string(),
                p.max_depth.to_string(),
                p.learning_rate.to_string(),
                p.min_child_weight.to_string(),
                p.colsample_bynode.to_string(),
                r.ess.map_or_else(String::new, |e| e.to_string()),
                r.collapsed.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[3.0, -4.0]).unwrap(), 12.5f64.sqrt());
        assert!(rmse::<f64>(&[]).is_err());
    }

    #[test]
    fn rmse_monte_carlo() {
        use crate::synthetic::standard_normal as normal;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e: Vec<f64> = (0..100_000).map(|_| 1.24 * normal(&mut rng)).collect();
        assert!((rmse(&e).unwrap() - 1.24).abs() < 0.02);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile_abs_error(&[2.0, -2.0, 2.0], 0.95).unwrap(), 2.0);
        let e: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((quantile_abs_error(&e, 0.95).unwrap() - 95.05).abs() < 1e-12);
        assert_eq!(quantile_abs_error(&e, 1.0).unwrap(), 100.0);
        assert_eq!(quantile_abs_error(&e, 0.0).unwrap(), 1.0);
        assert!(quantile_abs_error::<f64>(&[], 0.5).is_err());
        assert!(quantile_abs_error(&e, 1.5).is_err());
    }

    #[test]
    fn gerrity_two_classes() {
        let s = gerrity_scoring_matrix(&[0.5, 0.5]).unwrap();
        assert_eq!(s, vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
        assert!(matches!(gerrity_scoring_matrix(&[1.0, 0.0]), Err(Error::ZeroMarginal { class: 2 })));
    }

    fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect()
    }

    #[test]
    fn gerrity_equitable_and_rewarding() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = random_simplex(&mut rng, 3);
            let s = gerrity_scoring_matrix(&p).unwrap();
            for (i, row) in s.iter().enumerate() {
                let expected: f64 = row.iter().zip(&p).map(|(a, b)| a * b).sum();
                assert!(expected.abs() < 1e-10);
                assert!(row.iter().all(|&v| v <= row[i]));
                for (j, &v) in row.iter().enumerate() {
                    assert_eq!(v, s[j][i]);
                }
            }
        }
    }

    #[test]
    fn ess_extremes() {
        let perfect = ConfusionMatrix::from_counts(vec![vec![5, 0, 0], vec![0, 7, 0], vec![0, 0, 2]]).unwrap();
        assert!((ess::<f64>(&perfect).unwrap() - 1.0).abs() < 1e-12);
        let constant = ConfusionMatrix::from_counts(vec![vec![0, 0, 0], vec![5, 7, 2], vec![0, 0, 0]]).unwrap();
        assert!(ess::<f64>(&constant).unwrap().abs() < 1e-10);
        assert!(matches!(ess::<f64>(&ConfusionMatrix::zeros(3)), Err(Error::Empty(_))));
        let absent = ConfusionMatrix::from_counts(vec![vec![1, 0, 0], vec![0, 0, 0], vec![0, 0, 3]]).unwrap();
        assert!(matches!(ess::<f64>(&absent), Err(Error::ZeroMarginal { class: 2 })));
    }

    #[test]
    fn pss_examples() {
        let perfect = ConfusionMatrix::from_counts(vec![vec![4, 0], vec![0, 6]]).unwrap();
        assert_eq!(peirce_skill_score::<f64>(&perfect, 1).unwrap(), 1.0);
        // rows ∝ (1, 2), columns ∝ (3, 1): product joint
        let indep = ConfusionMatrix::from_counts(vec![vec![3, 1], vec![6, 2]]).unwrap();
        assert_eq!(peirce_skill_score::<f64>(&indep, 1).unwrap(), 0.0);
        assert!(peirce_skill_score::<f64>(&perfect, 2).is_err());
    }

    #[test]
    fn collapse_merges_into_lower_neighbour() {
        let m = ConfusionMatrix::from_counts(vec![vec![1, 2, 0], vec![0, 3, 0], vec![4, 0, 0]]).unwrap();
        let (c, flagged) = m.collapse_absent();
        assert!(flagged);
        assert_eq!(c.counts(), &[vec![1, 2], vec![4, 3]]);
        let first_absent = ConfusionMatrix::from_counts(vec![vec![0, 1, 1], vec![0, 1, 0], vec![0, 0, 2]]).unwrap();
        let (c, _) = first_absent.collapse_absent();
        assert_eq!(c.counts(), &[vec![2, 1], vec![0, 2]]);
        let (same, flagged) = ConfusionMatrix::from_counts(vec![vec![1, 0], vec![0, 1]]).unwrap().collapse_absent();
        assert!(!flagged);
        assert_eq!(same.k(), 2);
    }

    fn matrix_strategy() -> impl Strategy<Value = Vec<Vec<u64>>> {
        (2usize..=5).prop_flat_map(|k| {
            prop::collection::vec(prop::collection::vec(0u64..50, k), k)
                .prop_filter("every class observed", |m| (0..m.len()).all(|e| m.iter().map(|r| r[e]).sum::<u64>() > 0))
        })
    }

    proptest! {
        #[test]
        fn ess_is_mean_pss(counts in matrix_strategy()) {
            let m = ConfusionMatrix::from_counts(counts).unwrap();
            let k = m.k();
            let mean: f64 = (1..k).map(|r| peirce_skill_score::<f64>(&m, r).unwrap()).sum::<f64>() / (k - 1) as f64;
            prop_assert!((ess::<f64>(&m).unwrap() - mean).abs() < 1e-10);
        }

        #[test]
        fn ess_in_range(counts in matrix_strategy()) {
            let e = ess::<f64>(&ConfusionMatrix::from_counts(counts).unwrap()).unwrap();
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&e));
        }

        #[test]
        fn scores_permutation_invariant(mut e in prop::collection::vec(-20.0f64..20.0, 1..60), seed in any::<u64>()) {
            let r0 = rmse(&e).unwrap();
            let q0 = quantile_abs_error(&e, 0.95).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..e.len()).rev() {
                let j = rng.gen_range(0..=i);
                e.swap(i, j);
            }
            prop_assert!((rmse(&e).unwrap() - r0).abs() <= 1e-12 * (1.0 + r0));
            prop_assert_eq!(quantile_abs_error(&e, 0.95).unwrap(), q0);
        }
    }

    #[test]
    fn tuning_grid() {
        let g = HyperGrid::tuning();
        assert_eq!(g.len(), 18522);
        let first = g.combination(0);
        assert_eq!((first.n_rounds, first.max_depth, first.learning_rate), (1, 4, 0.2));
        let last = g.combination(g.len() - 1);
        assert_eq!((last.n_rounds, last.max_depth, last.colsample_bynode), (7, 10, 0.9));
        assert!(g.combinations().any(|p| p == GbrtParams::default()));
        assert_eq!(g.combination(1).colsample_bynode, 0.7);
    }

    fn cluster_streams(seed: u64) -> Vec<Vec<TrainingSample>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..2)
            .map(|_| {
                (0..150)
                    .map(|_| {
                        let label = ErrorClass::ALL[rng.gen_range(0..3)];
                        let c = label.index() as f64 * 4.0;
                        TrainingSample {
                            features: vec![c + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                            label,
                            replication: 1,
                        }
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn grid_of_one() {
        let p = GbrtParams { min_child_weight: 1.0, ..GbrtParams::default() };
        let r = grid_search(&cluster_streams(1), &HyperGrid::single(&p), 5, 0).unwrap();
        assert_eq!(r.best, p);
        assert!(r.rows[0].ess.unwrap() > 0.9);
    }

    #[test]
    fn duplicated_combinations_tie_to_first() {
        let mut g = HyperGrid::single(&GbrtParams { min_child_weight: 1.0, ..GbrtParams::default() });
        g.max_depth = vec![2, 2];
        let r = grid_search(&cluster_streams(2), &g, 5, 4).unwrap();
        assert_eq!(r.rows[0].ess, r.rows[1].ess);
        assert_eq!(r.best_index, 0);
    }

    #[test]
    fn blocked_folds_cover_range() {
        let f = blocked_folds(11, 5);
        assert_eq!(f.first().unwrap().0, 0);
        assert_eq!(f.last().unwrap().1, 11);
        assert!(f.windows(2).all(|w| w[0].1 == w[1].0));
    }
}
