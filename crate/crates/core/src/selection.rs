//! Which ads show under a prediction map, as exact probabilities.

use alloc::vec::Vec;

use num_traits::{One, Zero};

use crate::model::{Mechanism, PredictionMap, ProblemInstance};
use crate::{Rational, Result};

/// Per-ad show probabilities, aligned with [`ProblemInstance::ads`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShowDistribution {
    /// `Pr_f(i | q_i)`.
    pub conditional: Vec<Rational>,
    /// `w_i = Pr^Q(q_i) * Pr_f(i | q_i)`.
    pub weight: Vec<Rational>,
}

impl ShowDistribution {
    pub fn shows_anything(&self) -> bool {
        self.weight.iter().any(|w| !w.is_zero())
    }

    pub fn total_weight(&self) -> Rational {
        self.weight.iter().sum()
    }

    /// Total weight on ads in `bucket`.
    pub fn bucket_weight(&self, instance: &ProblemInstance, bucket: usize) -> Rational {
        instance
            .ads()
            .iter()
            .zip(&self.weight)
            .filter(|(ad, _)| ad.bucket == bucket)
            .map(|(_, w)| w)
            .sum()
    }
}

/// Canonical encoding of a [`ShowDistribution`]: the conditional show
/// probability of every ad in instance order. Weights follow from these and the
/// query distribution, so two maps share a signature exactly when they induce
/// the same selection.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SelectionSignature(pub Vec<Rational>);

impl SelectionSignature {
    pub fn shows_anything(&self) -> bool {
        self.0.iter().any(|c| !c.is_zero())
    }
}

fn score(instance: &ProblemInstance, f: &PredictionMap, ad: usize) -> Rational {
    let ad = &instance.ads()[ad];
    &ad.bid * f.get(ad.bucket)
}

pub fn show_distribution(instance: &ProblemInstance, f: &PredictionMap) -> Result<ShowDistribution> {
    f.check_len(instance)?;
    let n = instance.ads().len();
    let mut conditional = alloc::vec![Rational::zero(); n];
    match instance.mechanism() {
        Mechanism::All => {
            for (i, c) in conditional.iter_mut().enumerate() {
                if score(instance, f, i) >= Rational::one() {
                    *c = Rational::one();
                }
            }
        }
        Mechanism::One => {
            for group in instance.ads_by_query() {
                let scores: Vec<Rational> = group.iter().map(|&i| score(instance, f, i)).collect();
                let Some(best) = scores.iter().max() else {
                    continue;
                };
                if best.is_zero() {
                    continue;
                }
                let winners: Vec<usize> = group
                    .iter()
                    .zip(&scores)
                    .filter(|(_, s)| *s == best)
                    .map(|(&i, _)| i)
                    .collect();
                let share = Rational::new(1.into(), winners.len().into());
                for i in winners {
                    conditional[i] = share.clone();
                }
            }
        }
    }
    let weight = conditional
        .iter()
        .enumerate()
        .map(|(i, c)| c * instance.query_probability(i))
        .collect();
    Ok(ShowDistribution { conditional, weight })
}

pub fn selection_signature(instance: &ProblemInstance, f: &PredictionMap) -> Result<SelectionSignature> {
    Ok(SelectionSignature(show_distribution(instance, f)?.conditional))
}
