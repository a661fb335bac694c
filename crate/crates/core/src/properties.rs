//! Deciders for the sufficient conditions E1, E2 and SI, and the maps they make
//! both self-calibrated and efficient.
//!
//! - E1: `E_C[p | z, b, q] = E_C[p | z, q] = E_C[p | z]` wherever defined.
//! - E2: `E_C[p | z, b] = E_C[p | z]` wherever defined.
//! - SI: `E_f[p | z]` does not depend on `f` wherever it is defined.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;
use core::ops::ControlFlow;

use num_traits::Zero;

use crate::metrics::{conditional_ctr, pr_candidate, AdDistribution, Condition};
use crate::model::{Mechanism, PredictionMap, ProblemInstance};
use crate::optimize::all::{bid_groups, prefix_threshold, reachable_prefixes};
use crate::optimize::one::{self, ConfigVisitor, WinnerConfiguration};
use crate::optimize::ratio_system::{PathWeight, RatioSystem};
use crate::{Error, Rational, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Property {
    E1,
    E2,
    Si,
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Property::E1 => "E1",
            Property::E2 => "E2",
            Property::Si => "SI",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Witness {
    /// `E_C[p | lhs] != E_C[p | rhs]`.
    Conditional {
        lhs: Condition,
        lhs_value: Rational,
        rhs: Condition,
        rhs_value: Rational,
    },
    /// Two maps serving different average CTRs on `bucket`.
    Selection {
        bucket: usize,
        low: Rational,
        low_map: PredictionMap,
        high: Rational,
        high_map: PredictionMap,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyVerdict {
    pub property: Property,
    pub holds: bool,
    /// Present exactly when the property fails.
    pub witness: Option<Witness>,
}

impl PropertyVerdict {
    fn holds(property: Property) -> Self {
        PropertyVerdict {
            property,
            holds: true,
            witness: None,
        }
    }

    fn fails(property: Property, witness: Witness) -> Self {
        PropertyVerdict {
            property,
            holds: false,
            witness: Some(witness),
        }
    }
}

fn bids_in(instance: &ProblemInstance, cond: &Condition) -> BTreeSet<Rational> {
    instance
        .ads()
        .iter()
        .filter(|a| a.bucket == cond.bucket && cond.query.as_ref().is_none_or(|q| &a.query == q))
        .map(|a| a.bid.clone())
        .collect()
}

fn mismatch(
    dist: &AdDistribution,
    instance: &ProblemInstance,
    lhs: Condition,
    rhs: &Condition,
    rhs_value: &Rational,
) -> Option<Witness> {
    let lhs_value = conditional_ctr(dist, instance, &lhs)?;
    (lhs_value != *rhs_value).then(|| Witness::Conditional {
        lhs,
        lhs_value,
        rhs: rhs.clone(),
        rhs_value: rhs_value.clone(),
    })
}

/// Checks buckets in order; within a bucket, each query's bid cells (ascending
/// bid) against the query, then the query against the bucket.
pub fn check_e1(instance: &ProblemInstance) -> PropertyVerdict {
    let Ok(dist) = pr_candidate(instance) else {
        return PropertyVerdict::holds(Property::E1);
    };
    for z in 1..=instance.buckets() {
        let bucket = Condition::bucket(z);
        let Some(ez) = conditional_ctr(&dist, instance, &bucket) else {
            continue;
        };
        for (q, _) in instance.queries().entries() {
            let zq = Condition::bucket(z).with_query(q.clone());
            let Some(ezq) = conditional_ctr(&dist, instance, &zq) else {
                continue;
            };
            for b in bids_in(instance, &zq) {
                let cell = zq.clone().with_bid(b);
                if let Some(w) = mismatch(&dist, instance, cell, &zq, &ezq) {
                    return PropertyVerdict::fails(Property::E1, w);
                }
            }
            if let Some(w) = mismatch(&dist, instance, zq, &bucket, &ez) {
                return PropertyVerdict::fails(Property::E1, w);
            }
        }
    }
    PropertyVerdict::holds(Property::E1)
}

pub fn check_e2(instance: &ProblemInstance) -> PropertyVerdict {
    let Ok(dist) = pr_candidate(instance) else {
        return PropertyVerdict::holds(Property::E2);
    };
    for z in 1..=instance.buckets() {
        let bucket = Condition::bucket(z);
        let Some(ez) = conditional_ctr(&dist, instance, &bucket) else {
            continue;
        };
        for b in bids_in(instance, &bucket) {
            if let Some(w) = mismatch(&dist, instance, Condition::bucket(z).with_bid(b), &bucket, &ez) {
                return PropertyVerdict::fails(Property::E2, w);
            }
        }
    }
    PropertyVerdict::holds(Property::E2)
}

/// Smallest and largest served CTR seen on one bucket, with maps producing them.
#[derive(Clone)]
struct Range {
    low: (Rational, PredictionMap),
    high: (Rational, PredictionMap),
}

impl Range {
    fn witness(&self, bucket: usize) -> Option<Witness> {
        (self.low.0 != self.high.0).then(|| Witness::Selection {
            bucket,
            low: self.low.0.clone(),
            low_map: self.low.1.clone(),
            high: self.high.0.clone(),
            high_map: self.high.1.clone(),
        })
    }
}

fn first_violation(ranges: &[Option<Range>]) -> PropertyVerdict {
    ranges
        .iter()
        .enumerate()
        .find_map(|(i, r)| r.as_ref().and_then(|r| r.witness(i + 1)))
        .map_or_else(
            || PropertyVerdict::holds(Property::Si),
            |w| PropertyVerdict::fails(Property::Si, w),
        )
}

fn si_all(instance: &ProblemInstance) -> PropertyVerdict {
    // Under a threshold rule E_f[p | z] depends on f(z) alone, through the
    // prefix of bid groups it shows.
    let ranges: Vec<Option<Range>> = (1..=instance.buckets())
        .map(|z| {
            let groups = bid_groups(instance, z);
            let mut range: Option<Range> = None;
            let (mut mass, mut clicks) = (Rational::zero(), Rational::zero());
            for j in 0..reachable_prefixes(&groups) {
                for &i in &groups[j].ads {
                    let w = instance.query_probability(i);
                    clicks += w * &instance.ads()[i].ctr;
                    mass += w;
                }
                let mean = &clicks / &mass;
                let mut map = PredictionMap::zeros(instance.buckets());
                map.set(z, prefix_threshold(&groups, j + 1));
                let range = range.get_or_insert_with(|| Range {
                    low: (mean.clone(), map.clone()),
                    high: (mean.clone(), map.clone()),
                });
                if mean < range.low.0 {
                    range.low = (mean.clone(), map.clone());
                }
                if mean > range.high.0 {
                    range.high = (mean, map);
                }
            }
            range
        })
        .collect();
    first_violation(&ranges)
}

struct SiSearch<'a> {
    instance: &'a ProblemInstance,
    ranges: Vec<Option<Range>>,
}

impl ConfigVisitor for SiSearch<'_> {
    fn leaf(
        &mut self,
        config: &WinnerConfiguration,
        _value: &Rational,
        system: &RatioSystem,
        potentials: &[PathWeight],
    ) -> ControlFlow<()> {
        let mut witness: Option<PredictionMap> = None;
        let mut map = || {
            witness
                .get_or_insert_with(|| {
                    one::witness_map(self.instance.buckets(), &config.excluded, &system.witness(potentials))
                })
                .clone()
        };
        for (z, observed) in config.observed(self.instance).into_iter().enumerate() {
            let Some(c) = observed else { continue };
            match &mut self.ranges[z] {
                slot @ None => {
                    let f = map();
                    *slot = Some(Range {
                        low: (c.clone(), f.clone()),
                        high: (c, f),
                    });
                }
                Some(range) => {
                    if c < range.low.0 {
                        range.low = (c, map());
                    } else if c > range.high.0 {
                        range.high = (c, map());
                    }
                }
            }
        }
        ControlFlow::Continue(())
    }
}

/// Decides SI by enumerating every achievable selection. Under `ONE` this
/// walks all feasible winner configurations and fails past `config_budget`
/// search nodes.
pub fn check_si(instance: &ProblemInstance, config_budget: usize) -> Result<PropertyVerdict> {
    match instance.mechanism() {
        Mechanism::All => Ok(si_all(instance)),
        Mechanism::One => {
            let mut search = SiSearch {
                instance,
                ranges: alloc::vec![None; instance.buckets()],
            };
            one::search(instance, config_budget, &mut search)?;
            Ok(first_violation(&search.ranges))
        }
    }
}

/// `f*(z) = E_C[p | z]`, and `0` on empty buckets.
pub fn baseline_map(instance: &ProblemInstance) -> PredictionMap {
    let Ok(dist) = pr_candidate(instance) else {
        return PredictionMap::zeros(instance.buckets());
    };
    PredictionMap::from_trusted(
        (1..=instance.buckets())
            .map(|z| conditional_ctr(&dist, instance, &Condition::bucket(z)).unwrap_or_else(Rational::zero))
            .collect(),
    )
}

/// For a single query under `ONE`: `f*(z) = E_C[p | z, b(z)]` with `b(z)` the
/// top bid in bucket `z`. Every top-bid ad then scores `b(z) * f*(z)`, the value
/// of showing bucket `z`, so the best bucket wins and is calibrated.
pub fn single_query_one_map(instance: &ProblemInstance) -> Result<PredictionMap> {
    if instance.mechanism() != Mechanism::One {
        return Err(Error::WrongMechanism {
            expected: Mechanism::One,
        });
    }
    if instance.queries().len() != 1 {
        return Err(Error::MultipleQueries(instance.queries().len()));
    }
    let Ok(dist) = pr_candidate(instance) else {
        return Ok(PredictionMap::zeros(instance.buckets()));
    };
    Ok(PredictionMap::from_trusted(
        (1..=instance.buckets())
            .map(|z| {
                let top = instance.ads().iter().filter(|a| a.bucket == z).map(|a| &a.bid).max();
                top.and_then(|b| conditional_ctr(&dist, instance, &Condition::bucket(z).with_bid(b.clone())))
                    .unwrap_or_else(Rational::zero)
            })
            .collect(),
    ))
}
