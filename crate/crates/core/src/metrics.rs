//! Candidate and served ad distributions, conditional CTRs, efficiency and
//! calibration residuals.

use alloc::vec::Vec;

use num_traits::Zero;

use crate::model::{AdId, PredictionMap, ProblemInstance, QueryId};
use crate::selection::{show_distribution, ShowDistribution};
use crate::{Error, Rational, Result};

/// A probability distribution over the instance's ads, aligned with
/// [`ProblemInstance::ads`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdDistribution {
    /// Normalized probability of each ad.
    pub mass: Vec<Rational>,
    /// The total unnormalized weight the masses were divided by.
    pub normalizer: Rational,
}

impl AdDistribution {
    fn from_weights(weights: Vec<Rational>) -> Option<Self> {
        let normalizer: Rational = weights.iter().sum();
        if normalizer.is_zero() {
            return None;
        }
        let mass = weights.into_iter().map(|w| w / &normalizer).collect();
        Some(AdDistribution { mass, normalizer })
    }

    pub fn mass_of(&self, instance: &ProblemInstance, id: &AdId) -> Option<&Rational> {
        instance.ad_index(id).map(|i| &self.mass[i])
    }
}

/// Conditioning event for [`conditional_ctr`]: always a bucket, optionally a
/// bid and a query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Condition {
    pub bucket: usize,
    pub bid: Option<Rational>,
    pub query: Option<QueryId>,
}

impl Condition {
    pub fn bucket(bucket: usize) -> Self {
        Condition {
            bucket,
            bid: None,
            query: None,
        }
    }

    pub fn with_bid(mut self, bid: Rational) -> Self {
        self.bid = Some(bid);
        self
    }

    pub fn with_query(mut self, query: QueryId) -> Self {
        self.query = Some(query);
        self
    }

    fn matches(&self, instance: &ProblemInstance, i: usize) -> bool {
        let ad = &instance.ads()[i];
        ad.bucket == self.bucket
            && self.bid.as_ref().is_none_or(|b| &ad.bid == b)
            && self.query.as_ref().is_none_or(|q| &ad.query == q)
    }
}

/// `Pr_C`: each ad weighted by its query's probability.
pub fn pr_candidate(instance: &ProblemInstance) -> Result<AdDistribution> {
    if instance.ads().is_empty() {
        return Err(Error::NoAds);
    }
    let weights = (0..instance.ads().len())
        .map(|i| instance.query_probability(i).clone())
        .collect();
    AdDistribution::from_weights(weights).ok_or(Error::NoAds)
}

/// `Pr_f`: the distribution of ads actually served under `f`.
pub fn pr_shown(instance: &ProblemInstance, f: &PredictionMap) -> Result<AdDistribution> {
    let shown = show_distribution(instance, f)?;
    AdDistribution::from_weights(shown.weight).ok_or(Error::EmptySelection)
}

/// Mass-weighted mean CTR over the ads matching `cond`; `None` when they carry
/// no mass.
pub fn conditional_ctr(dist: &AdDistribution, instance: &ProblemInstance, cond: &Condition) -> Option<Rational> {
    weighted_ctr(&dist.mass, instance, cond)
}

pub(crate) fn weighted_ctr(weights: &[Rational], instance: &ProblemInstance, cond: &Condition) -> Option<Rational> {
    let mut mass = Rational::zero();
    let mut clicks = Rational::zero();
    for (i, w) in weights.iter().enumerate() {
        if w.is_zero() || !cond.matches(instance, i) {
            continue;
        }
        clicks += w * &instance.ads()[i].ctr;
        mass += w;
    }
    (!mass.is_zero()).then(|| clicks / mass)
}

/// Expected value per query: `sum_i w_i (p_i b_i - cost)`.
pub fn expected_value(instance: &ProblemInstance, f: &PredictionMap) -> Result<Rational> {
    Ok(value_of(instance, &show_distribution(instance, f)?))
}

pub(crate) fn value_of(instance: &ProblemInstance, shown: &ShowDistribution) -> Rational {
    let cost = instance.mechanism().cost();
    instance
        .ads()
        .iter()
        .zip(&shown.weight)
        .filter(|(_, w)| !w.is_zero())
        .map(|(ad, w)| w * (ad.value() - &cost))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketCalibration {
    pub bucket: usize,
    /// `E_f[p | z]`, absent when nothing in the bucket is served.
    pub observed: Option<Rational>,
    pub predicted: Rational,
    /// `observed - predicted`.
    pub residual: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CalibrationReport {
    pub buckets: Vec<BucketCalibration>,
}

impl CalibrationReport {
    /// True when every defined residual is exactly zero.
    pub fn is_self_calibrated(&self) -> bool {
        self.buckets
            .iter()
            .all(|b| b.residual.as_ref().is_none_or(Zero::is_zero))
    }

    pub fn observed(&self, bucket: usize) -> Option<&Rational> {
        self.buckets[bucket - 1].observed.as_ref()
    }
}

pub fn calibration_report(instance: &ProblemInstance, f: &PredictionMap) -> Result<CalibrationReport> {
    let shown = show_distribution(instance, f)?;
    Ok(report_from_weights(instance, f, &shown.weight))
}

pub(crate) fn report_from_weights(
    instance: &ProblemInstance,
    f: &PredictionMap,
    weights: &[Rational],
) -> CalibrationReport {
    let buckets = (1..=instance.buckets())
        .map(|z| {
            let observed = weighted_ctr(weights, instance, &Condition::bucket(z));
            let predicted = f.get(z).clone();
            let residual = observed.as_ref().map(|o| o - &predicted);
            BucketCalibration {
                bucket: z,
                observed,
                predicted,
                residual,
            }
        })
        .collect();
    CalibrationReport { buckets }
}
