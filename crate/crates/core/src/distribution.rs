use serde::{Deserialize, Serialize};

use crate::error::{LeapError, Result};
use crate::sequence::TokenId;

/// Probability vector over the vocabulary for one position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(LeapError::invalid("empty distribution"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(LeapError::invalid("distribution has negative or non-finite entries"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(LeapError::invalid(format!("distribution sums to {total}")));
        }
        Ok(Self(probs))
    }

    /// Wraps probabilities that are already known to be normalized.
    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        Self(probs)
    }

    pub fn one_hot(size: usize, token: TokenId) -> Self {
        let mut p = vec![0.0; size];
        p[token as usize] = 1.0;
        Self(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.0.get(token as usize).copied().unwrap_or(0.0)
    }

    /// Argmax token and its probability; ties go to the smaller token id.
    pub fn greedy(&self) -> (TokenId, f64) {
        let mut best = 0;
        for (idx, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = idx;
            }
        }
        (best as TokenId, self.0[best])
    }

    /// Removes the mask token's mass and renormalizes the rest. A
    /// distribution that puts all its mass on the mask becomes uniform over
    /// the remaining tokens.
    pub fn without_token(&self, token: TokenId) -> Self {
        let mut p = self.0.clone();
        p[token as usize] = 0.0;
        let total: f64 = p.iter().sum();
        if total > 0.0 {
            p.iter_mut().for_each(|x| *x /= total);
        } else {
            let share = 1.0 / (p.len() - 1) as f64;
            for (idx, x) in p.iter_mut().enumerate() {
                *x = if idx == token as usize { 0.0 } else { share };
            }
        }
        Self(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_picks_argmax() {
        let d = Distribution::new(vec![0.1, 0.7, 0.2]).unwrap();
        assert_eq!(d.greedy(), (1, 0.7));
    }

    #[test]
    fn greedy_ties_go_to_smaller_id() {
        let d = Distribution::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(d.greedy(), (0, 0.5));
        let d = Distribution::new(vec![0.2, 0.4, 0.4]).unwrap();
        assert_eq!(d.greedy(), (1, 0.4));
    }

    #[test]
    fn greedy_one_hot() {
        assert_eq!(Distribution::one_hot(5, 3).greedy(), (3, 1.0));
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(Distribution::new(vec![0.5, 0.4]).is_err());
        assert!(Distribution::new(vec![1.5, -0.5]).is_err());
        assert!(Distribution::new(vec![]).is_err());
    }

    #[test]
    fn without_token_renormalizes() {
        let d = Distribution::new(vec![0.2, 0.3, 0.5]).unwrap().without_token(2);
        assert!((d.prob(0) - 0.4).abs() < 1e-12);
        assert!((d.prob(1) - 0.6).abs() < 1e-12);
        assert_eq!(d.prob(2), 0.0);
        let d = Distribution::one_hot(3, 2).without_token(2);
        assert_eq!(d.probs(), &[0.5, 0.5, 0.0]);
    }
}
