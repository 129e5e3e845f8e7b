//! Sleeping-expert wrapper: abstention-trick prediction, loss assignment,
//! regret accounting and compound-expert audits.

use serde::{Deserialize, Serialize};

use crate::aggregation::Aggregator;
use crate::domain::{convex_combine, dot, sq_err, ErrorClass, ExpertRoster, WeightVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::wakeup::wake_from_class;

/// What decided the awake set of a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WakeSource {
    Classifier,
    OracleClass,
    OracleExpert,
    AllAwake,
}

/// The experts awake at one round, with the class that woke them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AwakeSet {
    mask: Vec<bool>,
    predicted_class: ErrorClass,
    source: WakeSource,
}

impl AwakeSet {
    /// Validates that the set is non-empty and contains every always-awake
    /// expert of the roster.
    pub fn new(
        mask: Vec<bool>,
        predicted_class: ErrorClass,
        source: WakeSource,
        roster: &ExpertRoster,
    ) -> Result<Self> {
        if mask.len() != roster.len() {
            return Err(Error::DimensionMismatch { expected: roster.len(), got: mask.len() });
        }
        if let Some(e) = roster.experts().iter().find(|e| !e.is_biased() && !mask[e.index]) {
            return Err(Error::InvalidAwakeSet(format!("always-awake expert {} is asleep", e.name)));
        }
        Self::from_mask(mask, predicted_class, source)
    }

    /// Mask-only constructor, for callers without a roster (audits, traces).
    pub fn from_mask(mask: Vec<bool>, predicted_class: ErrorClass, source: WakeSource) -> Result<Self> {
        if !mask.iter().any(|&a| a) {
            return Err(Error::InvalidAwakeSet("no expert is awake".into()));
        }
        Ok(Self { mask, predicted_class, source })
    }

    pub fn all(n: usize) -> Self {
        Self { mask: vec![true; n], predicted_class: ErrorClass::Neutral, source: WakeSource::AllAwake }
    }

    pub fn is_awake(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn awake_count(&self) -> usize {
        self.mask.iter().filter(|&&a| a).count()
    }

    pub fn all_awake(&self) -> bool {
        self.mask.iter().all(|&a| a)
    }

    pub fn awake_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i)
    }

    pub fn predicted_class(&self) -> ErrorClass {
        self.predicted_class
    }

    pub fn source(&self) -> WakeSource {
        self.source
    }

    /// `1`/`0` per expert, in roster order.
    pub fn bitstring(&self) -> String {
        self.mask.iter().map(|&a| if a { '1' } else { '0' }).collect()
    }

    pub fn parse_bitstring(s: &str) -> Option<Vec<bool>> {
        s.chars()
            .map(|c| match c {
                '1' => Some(true),
                '0' => Some(false),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SefPrediction<T> {
    pub value: T,
    /// The awake experts carried no weight; `value` is their plain mean.
    pub degenerate: bool,
}

/// Abstention-trick prediction `Σ_{E} w_i x_i / Σ_{E} w_i`.
///
/// Sleeping experts' predictions are never read. With every expert awake
/// this is exactly [`convex_combine`].
pub fn sef_predict<T: Scalar>(
    weights: &WeightVector<T>,
    predictions: &[T],
    awake: &AwakeSet,
) -> Result<SefPrediction<T>> {
    if predictions.len() != weights.len() || awake.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            got: if predictions.len() != weights.len() { predictions.len() } else { awake.len() },
        });
    }
    if awake.all_awake() {
        return Ok(SefPrediction { value: convex_combine(weights, predictions)?, degenerate: false });
    }
    let mut mass = T::zero();
    let mut acc = T::zero();
    for i in awake.awake_indices() {
        let w = weights.get(i);
        mass = mass + w;
        acc = acc + w * predictions[i];
    }
    if mass > T::zero() {
        return Ok(SefPrediction { value: acc / mass, degenerate: false });
    }
    log::debug!("awake experts carry zero weight; falling back to their mean");
    let k = T::from_count(awake.awake_count());
    let mean = awake.awake_indices().fold(T::zero(), |s, i| s + predictions[i]) / k;
    Ok(SefPrediction { value: mean, degenerate: true })
}

/// Sleeping experts' predictions replaced by the aggregation's own.
pub fn abstained_predictions<T: Scalar>(predictions: &[T], awake: &AwakeSet, sef_prediction: T) -> Vec<T> {
    predictions
        .iter()
        .zip(awake.mask())
        .map(|(&x, &a)| if a { x } else { sef_prediction })
        .collect()
}

/// One completed sleeping-expert round.
#[derive(Debug, Clone, PartialEq)]
pub struct SefRound<T> {
    pub weights_before: WeightVector<T>,
    pub awake_set: AwakeSet,
    pub sef_prediction: T,
    pub per_expert_sef_loss: Vec<T>,
    pub aggregation_loss: T,
    pub degenerate: bool,
}

/// Awake experts get their own loss; sleeping experts inherit the
/// aggregation's loss exactly.
pub fn sef_assign_losses<T: Scalar>(
    weights_before: &WeightVector<T>,
    predictions: &[T],
    awake: &AwakeSet,
    sef_prediction: T,
    observation: T,
) -> Result<SefRound<T>> {
    if !observation.is_finite() || !sef_prediction.is_finite() {
        return Err(Error::NonFinite("sleeping-expert losses"));
    }
    if predictions.len() != awake.len() {
        return Err(Error::DimensionMismatch { expected: awake.len(), got: predictions.len() });
    }
    let aggregation_loss = sq_err(sef_prediction, observation);
    let per_expert_sef_loss = predictions
        .iter()
        .zip(awake.mask())
        .map(|(&x, &a)| if a { sq_err(x, observation) } else { aggregation_loss })
        .collect();
    Ok(SefRound {
        weights_before: weights_before.clone(),
        awake_set: awake.clone(),
        sef_prediction,
        per_expert_sef_loss,
        aggregation_loss,
        degenerate: false,
    })
}

/// Runs any [`Aggregator`] in the sleeping-expert framework.
///
/// The wrapped rule is updated on the abstained prediction vector at the
/// sleeping-expert prediction, so its linearized losses are the SEF losses.
#[derive(Debug, Clone, PartialEq)]
pub struct SleepingAggregator<A> {
    inner: A,
}

impl<A> SleepingAggregator<A> {
    pub fn new(inner: A) -> Self {
        Self { inner }
    }

    pub fn inner(&self) -> &A {
        &self.inner
    }

    pub fn into_inner(self) -> A {
        self.inner
    }
}

impl<A> SleepingAggregator<A> {
    pub fn weights<T: Scalar>(&self) -> &WeightVector<T>
    where
        A: Aggregator<T>,
    {
        self.inner.weights()
    }

    pub fn predict<T: Scalar>(&self, predictions: &[T], awake: &AwakeSet) -> Result<SefPrediction<T>>
    where
        A: Aggregator<T>,
    {
        sef_predict(self.inner.weights(), predictions, awake)
    }

    pub fn update<T: Scalar>(
        &mut self,
        predictions: &[T],
        awake: &AwakeSet,
        observation: T,
    ) -> Result<SefRound<T>>
    where
        A: Aggregator<T>,
    {
        let pred = self.predict(predictions, awake)?;
        let mut round =
            sef_assign_losses(self.inner.weights(), predictions, awake, pred.value, observation)?;
        round.degenerate = pred.degenerate;
        let abstained = abstained_predictions(predictions, awake, pred.value);
        self.inner.update_at(&abstained, pred.value, observation)?;
        Ok(round)
    }
}

/// The oracle strategies used to separate classifier error from specialist
/// quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// The classifier is replaced by the true error class.
    OracleClass,
    /// As `OracleClass`, and the round's loss is booked as zero whenever a
    /// specialist is awake.
    OracleExpert,
}

impl OracleMode {
    pub fn source(self) -> WakeSource {
        match self {
            OracleMode::OracleClass => WakeSource::OracleClass,
            OracleMode::OracleExpert => WakeSource::OracleExpert,
        }
    }

    pub fn forces_zero_loss(self, awake: &AwakeSet, roster: &ExpertRoster) -> bool {
        self == OracleMode::OracleExpert && roster.biased_indices().iter().any(|&i| awake.is_awake(i))
    }
}

/// Awake set under an oracle: the wake rule applied to the true class.
pub fn oracle_awake_set(
    mode: OracleMode,
    true_class: Option<ErrorClass>,
    round: usize,
    activation_round: usize,
    roster: &ExpertRoster,
) -> Result<AwakeSet> {
    let class = true_class.ok_or(Error::OracleUnavailable(round))?;
    let set = wake_from_class(class, round, activation_round, roster)?;
    AwakeSet::new(set.mask().to_vec(), class, mode.source(), roster)
}

/// Minimal per-round record needed for regret accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SefStep<T> {
    pub predictions: Vec<T>,
    pub awake: Vec<bool>,
    pub prediction: T,
    pub observation: T,
    pub predicted_class: ErrorClass,
    pub true_class: ErrorClass,
}

impl<T: Scalar> SefStep<T> {
    fn aggregation_loss(&self) -> T {
        sq_err(self.prediction, self.observation)
    }

    fn expert_loss(&self, i: usize) -> T {
        sq_err(self.predictions[i], self.observation)
    }
}

/// `Σ_t (ℓ_t(w) − ℓ_t(δ_i)) 1{i ∈ E_t}`.
pub fn sef_regret_vs_expert<T: Scalar>(trace: &[SefStep<T>], expert: usize) -> T {
    trace
        .iter()
        .filter(|s| s.awake[expert])
        .fold(T::zero(), |acc, s| acc + (s.aggregation_loss() - s.expert_loss(expert)))
}

/// `Σ_t (ℓ_t(w) − ℓ_t(q^{E_t})) q(E_t)`, with `q^{E_t}` the restriction of
/// `q` to the awake experts, renormalized.
pub fn sef_regret_vs_convex<T: Scalar>(trace: &[SefStep<T>], q: &WeightVector<T>) -> T {
    trace.iter().fold(T::zero(), |acc, s| {
        let mass = s
            .awake
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .fold(T::zero(), |m, (i, _)| m + q.get(i));
        if mass == T::zero() {
            return acc;
        }
        let restricted: Vec<T> = (0..q.len())
            .map(|i| if s.awake[i] { q.get(i) / mass } else { T::zero() })
            .collect();
        let combo = dot(&restricted, &s.predictions);
        acc + (s.aggregation_loss() - sq_err(combo, s.observation)) * mass
    })
}

/// Per-round best awake expert, lowest index on ties.
pub fn best_awake_compound<T: Scalar>(trace: &[SefStep<T>]) -> Vec<usize> {
    trace
        .iter()
        .map(|s| {
            let mut best = None::<(usize, T)>;
            for i in (0..s.predictions.len()).filter(|&i| s.awake[i]) {
                let l = s.expert_loss(i);
                if best.is_none_or(|(_, b)| l < b) {
                    best = Some((i, l));
                }
            }
            best.map(|(i, _)| i).expect("awake set is non-empty")
        })
        .collect()
}

/// Compound-expert regret decomposed over (predicted class, true class)
/// cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretAudit<T> {
    pub per_expert_sef_regret: Vec<T>,
    /// `[predicted][true]`.
    pub cell_counts: [[usize; 3]; 3],
    /// Largest instantaneous regret `ℓ_t(w) − ℓ_t(δ_{i_t})` per cell.
    pub cell_max_instant_regret: [[Option<T>; 3]; 3],
    /// Σ_t of instantaneous regrets against the compound expert.
    pub compound_regret: T,
    /// Σ over cells of count × max instantaneous regret.
    pub bound_rhs: T,
    /// Σ over predicted classes of count × max regret, defined only when
    /// every off-diagonal cell is empty.
    pub perfect_bound_rhs: Option<T>,
    /// `compound_regret ≤ bound_rhs` up to summation rounding.
    pub bound_holds: bool,
    pub perfect_bound_holds: Option<bool>,
}

impl<T: Scalar> RegretAudit<T> {
    pub fn rounds(&self) -> usize {
        self.cell_counts.iter().flatten().sum()
    }

    pub fn classifier_perfect(&self) -> bool {
        (0..3).all(|a| (0..3).all(|b| a == b || self.cell_counts[a][b] == 0))
    }
}

pub fn audit_compound_bound<T: Scalar>(trace: &[SefStep<T>], compound: &[usize]) -> Result<RegretAudit<T>> {
    if compound.len() != trace.len() {
        return Err(Error::DimensionMismatch { expected: trace.len(), got: compound.len() });
    }
    let n = trace.first().map_or(0, |s| s.predictions.len());
    let mut counts = [[0usize; 3]; 3];
    let mut cell_max: [[Option<T>; 3]; 3] = [[None; 3]; 3];
    let mut row_max: [Option<T>; 3] = [None; 3];
    let mut lhs = T::zero();
    let mut abs_sum = T::zero();
    for (t, (step, &it)) in trace.iter().zip(compound).enumerate() {
        if it >= step.predictions.len() || !step.awake[it] {
            return Err(Error::CompoundAsleep { round: t + 1, expert: it });
        }
        let r = step.aggregation_loss() - step.expert_loss(it);
        lhs = lhs + r;
        abs_sum = abs_sum + r.abs();
        let (a, b) = (step.predicted_class.index(), step.true_class.index());
        counts[a][b] += 1;
        cell_max[a][b] = Some(cell_max[a][b].map_or(r, |m| m.max(r)));
        row_max[a] = Some(row_max[a].map_or(r, |m| m.max(r)));
    }
    let mut rhs = T::zero();
    for a in 0..3 {
        for b in 0..3 {
            if let Some(m) = cell_max[a][b] {
                rhs = rhs + T::from_count(counts[a][b]) * m;
            }
        }
    }
    let perfect = (0..3).all(|a| (0..3).all(|b| a == b || counts[a][b] == 0));
    let perfect_rhs = perfect.then(|| {
        (0..3).fold(T::zero(), |acc, a| {
            let n_a: usize = counts[a].iter().sum();
            row_max[a].map_or(acc, |m| acc + T::from_count(n_a) * m)
        })
    });
    // Rounding allowance of the two sums: T·ε·Σ|r| bounds both.
    let slack = T::from_count(trace.len().max(1)) * T::epsilon() * abs_sum * T::lit(2.0);
    let per_expert_sef_regret = (0..n).map(|i| sef_regret_vs_expert(trace, i)).collect();
    Ok(RegretAudit {
        per_expert_sef_regret,
        cell_counts: counts,
        cell_max_instant_regret: cell_max,
        compound_regret: lhs,
        bound_rhs: rhs,
        perfect_bound_rhs: perfect_rhs,
        bound_holds: lhs <= rhs + slack,
        perfect_bound_holds: perfect_rhs.map(|p| lhs <= p + slack),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::BoaState;

    fn roster() -> ExpertRoster {
        ExpertRoster::new(&["a", "b", "q10", "q30", "q70", "q90"], &["q10", "q30"], &["q70", "q90"])
            .unwrap()
    }

    #[test]
    fn all_awake_matches_convex_combine() {
        let w = WeightVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        let x = [10.0, 20.0, 30.0];
        let p = sef_predict(&w, &x, &AwakeSet::all(3)).unwrap();
        assert_eq!(p.value, convex_combine(&w, &x).unwrap());
    }

    #[test]
    fn singleton_predicts_that_expert() {
        let w = WeightVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        let set = AwakeSet::from_mask(vec![false, true, false], ErrorClass::Neutral, WakeSource::Classifier)
            .unwrap();
        assert_eq!(sef_predict(&w, &[10.0, 20.0, 30.0], &set).unwrap().value, 20.0);
    }

    #[test]
    fn renormalized_subset() {
        let w = WeightVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        let set = AwakeSet::from_mask(vec![true, false, true], ErrorClass::Neutral, WakeSource::Classifier)
            .unwrap();
        let p: f64 = sef_predict(&w, &[10.0, 20.0, 30.0], &set).unwrap().value;
        assert!((p - 11.0 / 0.7).abs() < 1e-12);
        // Fixed point: substituting p for the sleeper reproduces p.
        let sub = abstained_predictions(&[10.0, 20.0, 30.0], &set, p);
        assert!((convex_combine(&w, &sub).unwrap() - p).abs() < 1e-12);
    }

    #[test]
    fn zero_mass_falls_back_to_mean() {
        let w = WeightVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        let set = AwakeSet::from_mask(vec![false, true, true], ErrorClass::Neutral, WakeSource::Classifier)
            .unwrap();
        let p = sef_predict(&w, &[10.0, 20.0, 30.0], &set).unwrap();
        assert!(p.degenerate);
        assert_eq!(p.value, 25.0);
    }

    #[test]
    fn sleeper_inherits_aggregation_loss() {
        let w = WeightVector::new(vec![0.5, 0.5]).unwrap();
        let set = AwakeSet::from_mask(vec![true, false], ErrorClass::Neutral, WakeSource::Classifier).unwrap();
        let p = sef_predict(&w, &[10.0, 99.0], &set).unwrap().value;
        let round = sef_assign_losses(&w, &[10.0, 99.0], &set, p, 10.0).unwrap();
        assert_eq!(round.per_expert_sef_loss, vec![0.0, 0.0]);
        assert_eq!(round.aggregation_loss, 0.0);
    }

    #[test]
    fn all_awake_losses_are_plain_losses() {
        let w = WeightVector::<f64>::uniform(2).unwrap();
        let round = sef_assign_losses(&w, &[1.0, 4.0], &AwakeSet::all(2), 2.5, 2.0).unwrap();
        assert_eq!(round.per_expert_sef_loss, vec![1.0, 4.0]);
    }

    #[test]
    fn awake_set_validation() {
        let r = roster();
        assert!(AwakeSet::new(vec![true, false, true, true, false, false], ErrorClass::Positive, WakeSource::Classifier, &r).is_err());
        assert!(AwakeSet::new(vec![true, true, true, true, false, false], ErrorClass::Positive, WakeSource::Classifier, &r).is_ok());
        assert!(AwakeSet::from_mask(vec![false, false], ErrorClass::Neutral, WakeSource::Classifier).is_err());
        assert_eq!(AwakeSet::parse_bitstring("101"), Some(vec![true, false, true]));
        assert_eq!(AwakeSet::parse_bitstring("1x"), None);
    }

    #[test]
    fn oracle_sets() {
        let r = roster();
        let s = oracle_awake_set(OracleMode::OracleClass, Some(ErrorClass::Neutral), 200, 100, &r).unwrap();
        assert_eq!(s.bitstring(), "110000");
        let s = oracle_awake_set(OracleMode::OracleClass, Some(ErrorClass::Positive), 200, 100, &r).unwrap();
        assert_eq!(s.bitstring(), "111100");
        assert_eq!(s.source(), WakeSource::OracleClass);
        let s = oracle_awake_set(OracleMode::OracleExpert, Some(ErrorClass::Negative), 200, 100, &r).unwrap();
        assert_eq!(s.bitstring(), "110011");
        assert!(OracleMode::OracleExpert.forces_zero_loss(&s, &r));
        assert!(!OracleMode::OracleClass.forces_zero_loss(&s, &r));
        assert!(oracle_awake_set(OracleMode::OracleClass, None, 200, 100, &r).is_err());
    }

    fn step(preds: Vec<f64>, awake: Vec<bool>, pred: f64, obs: f64) -> SefStep<f64> {
        SefStep {
            predictions: preds,
            awake,
            prediction: pred,
            observation: obs,
            predicted_class: ErrorClass::Neutral,
            true_class: ErrorClass::Neutral,
        }
    }

    #[test]
    fn regret_vs_expert_hand_case() {
        // Round 1: aggregation loss 4, expert loss 1. Round 2: asleep.
        let trace = vec![
            step(vec![1.0, 2.0], vec![true, true], 2.0, 0.0),
            step(vec![1.0, 9.0], vec![false, true], 9.0, 0.0),
        ];
        assert_eq!(sef_regret_vs_expert(&trace, 0), 3.0);
        let never = vec![step(vec![1.0, 2.0], vec![false, true], 2.0, 0.0)];
        assert_eq!(sef_regret_vs_expert(&never, 0), 0.0);
    }

    #[test]
    fn regret_vs_convex_brute_force() {
        // Five rounds, both always awake, uniform q: the combination predicts
        // the midpoint.
        let trace: Vec<_> = (0..5)
            .map(|t| step(vec![0.0, 2.0], vec![true, true], 1.5, t as f64 * 0.5))
            .collect();
        let q = WeightVector::<f64>::uniform(2).unwrap();
        let expected: f64 = (0..5)
            .map(|t| {
                let y = t as f64 * 0.5;
                (1.5 - y).powi(2) - (1.0 - y).powi(2)
            })
            .sum();
        assert!((sef_regret_vs_convex(&trace, &q) - expected).abs() < 1e-12);

        let asleep = vec![step(vec![0.0, 2.0], vec![true, false], 0.0, 1.0)];
        let q1 = WeightVector::vertex(2, 1).unwrap();
        assert_eq!(sef_regret_vs_convex(&asleep, &q1), 0.0);
    }

    #[test]
    fn singleton_compound_has_zero_regret() {
        let trace: Vec<_> = (0..20)
            .map(|t| {
                let i = t % 3;
                let mut awake = vec![false; 3];
                awake[i] = true;
                let preds = vec![1.0 + t as f64, 2.0, -3.0];
                step(preds.clone(), awake, preds[i], 0.7)
            })
            .collect();
        let compound: Vec<usize> = (0..20).map(|t| t % 3).collect();
        let audit = audit_compound_bound(&trace, &compound).unwrap();
        assert_eq!(audit.compound_regret, 0.0);
        assert!(audit.bound_holds);
        assert!(audit.classifier_perfect());
        assert!(audit.perfect_bound_rhs.is_some());
    }

    #[test]
    fn compound_must_be_awake() {
        let trace = vec![step(vec![1.0, 2.0], vec![true, false], 1.0, 0.0)];
        assert!(matches!(
            audit_compound_bound(&trace, &[1]),
            Err(Error::CompoundAsleep { round: 1, expert: 1 })
        ));
    }

    #[test]
    fn wrapper_with_all_awake_is_plain_boa() {
        let mut plain = BoaState::<f64>::new(3).unwrap();
        let mut sef = SleepingAggregator::new(BoaState::<f64>::new(3).unwrap());
        for t in 0..100 {
            let y = (t as f64 * 0.2).sin() * 4.0;
            let x = [y + 1.0, y - 0.5, y + (t as f64).cos()];
            let p = plain.predict(&x).unwrap();
            let s = sef.predict(&x, &AwakeSet::all(3)).unwrap();
            assert_eq!(p.to_bits(), s.value.to_bits());
            plain.update(&x, y).unwrap();
            sef.update(&x, &AwakeSet::all(3), y).unwrap();
            assert_eq!(plain, *sef.inner());
        }
    }
}
