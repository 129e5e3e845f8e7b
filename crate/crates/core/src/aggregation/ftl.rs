use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which of the two FTL candidates is followed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Candidate {
    /// The reference aggregation (plain BOA).
    A,
    /// The sleeping-expert aggregation.
    B,
}

/// Follow-the-leader over two aggregations, optionally penalizing B by
/// `regularizer_coefficient · t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtlState<T> {
    cumulative_loss_a: T,
    cumulative_loss_b: T,
    regularizer_coefficient: T,
    /// Round about to be predicted, starting at 1.
    round: usize,
}

impl<T: Scalar> FtlState<T> {
    pub fn new(regularizer_coefficient: T) -> Result<Self> {
        if !(regularizer_coefficient >= T::zero() && regularizer_coefficient.is_finite()) {
            return Err(Error::param(
                "ftl_regularizer",
                format!("must be finite and non-negative, got {regularizer_coefficient}"),
            ));
        }
        Ok(Self {
            cumulative_loss_a: T::zero(),
            cumulative_loss_b: T::zero(),
            regularizer_coefficient,
            round: 1,
        })
    }

    pub fn plain() -> Self {
        Self::new(T::zero()).expect("zero coefficient is valid")
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn cumulative_losses(&self) -> (T, T) {
        (self.cumulative_loss_a, self.cumulative_loss_b)
    }

    /// B iff `L_B + c·t ≤ L_A`; ties go to B.
    pub fn select(&self) -> Candidate {
        let penalty = self.regularizer_coefficient * T::from_count(self.round);
        if self.cumulative_loss_b + penalty <= self.cumulative_loss_a {
            Candidate::B
        } else {
            Candidate::A
        }
    }

    /// Adds this round's losses of both candidates and advances the round.
    pub fn record(&mut self, loss_a: T, loss_b: T) -> Result<()> {
        if !(loss_a >= T::zero() && loss_b >= T::zero()) || !loss_a.is_finite() || !loss_b.is_finite() {
            return Err(Error::NonFinite("FTL candidate losses"));
        }
        self.cumulative_loss_a = self.cumulative_loss_a + loss_a;
        self.cumulative_loss_b = self.cumulative_loss_b + loss_b;
        self.round += 1;
        Ok(())
    }

    #[doc(hidden)]
    pub fn from_parts(loss_a: T, loss_b: T, coefficient: T, round: usize) -> Self {
        Self {
            cumulative_loss_a: loss_a,
            cumulative_loss_b: loss_b,
            regularizer_coefficient: coefficient,
            round,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(FtlState::from_parts(3.0, 2.5, 0.0, 5).select(), Candidate::B);
        assert_eq!(FtlState::from_parts(3.0, 3.0, 0.0, 5).select(), Candidate::B);
        assert_eq!(FtlState::from_parts(10.2, 10.0, 0.0025, 100).select(), Candidate::A);
        assert_eq!(FtlState::from_parts(10.3, 10.0, 0.0025, 100).select(), Candidate::B);
    }

    #[test]
    fn first_round_picks_b() {
        assert_eq!(FtlState::<f64>::plain().select(), Candidate::B);
        assert_eq!(FtlState::<f64>::new(0.0025).unwrap().select(), Candidate::A);
    }

    #[test]
    fn record_accumulates() {
        let mut f = FtlState::<f64>::plain();
        f.record(1.0, 2.0).unwrap();
        f.record(1.0, 0.5).unwrap();
        assert_eq!(f.cumulative_losses(), (2.0, 2.5));
        assert_eq!(f.round(), 3);
        assert_eq!(f.select(), Candidate::A);
        assert!(f.record(-1.0, 0.0).is_err());
        assert!(FtlState::<f64>::new(-0.1).is_err());
    }
}
