//! The recalibration operator `T`, its iteration, and fixed-point enumeration.
//!
//! `T(f)(z)` is the average CTR observed on bucket `z` when serving with `f`,
//! or `f(z)` when nothing in `z` is served. A map is a fixed point of `T`
//! exactly when it is self-calibrated.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use num_traits::Zero;

use crate::metrics::{expected_value, report_from_weights};
use crate::model::{Mechanism, PredictionMap, ProblemInstance};
use crate::optimize::all::{bid_groups, reachable_prefixes};
use crate::optimize::one::{self, ConfigVisitor, WinnerConfiguration, DEFAULT_CONFIG_BUDGET};
use crate::optimize::ratio_system::{PathWeight, RatioSystem};
use crate::selection::{selection_signature, show_distribution, SelectionSignature};
use crate::{Error, Rational, Result};

pub fn apply_t(instance: &ProblemInstance, f: &PredictionMap) -> Result<PredictionMap> {
    let shown = show_distribution(instance, f)?;
    let report = report_from_weights(instance, f, &shown.weight);
    Ok(PredictionMap::from_trusted(
        report
            .buckets
            .into_iter()
            .map(|b| b.observed.unwrap_or(b.predicted))
            .collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceOutcome {
    /// `T(maps[i]) == maps[i]`.
    FixedPoint(usize),
    /// `maps[start + period] == maps[start]` with `period >= 2`.
    Cycle {
        start: usize,
        period: usize,
    },
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CalibrationTrace {
    /// `f0, T(f0), T(T(f0)), ...` up to and including the first repeated map.
    pub maps: Vec<PredictionMap>,
    pub outcome: TraceOutcome,
}

/// Applies `T` until a map repeats exactly or `max_steps` applications are used.
pub fn iterate_t(instance: &ProblemInstance, f0: &PredictionMap, max_steps: usize) -> Result<CalibrationTrace> {
    if max_steps == 0 {
        return Err(Error::InvalidArgument("max_steps must be at least 1".into()));
    }
    f0.check_len(instance)?;
    let mut maps = alloc::vec![f0.clone()];
    for _ in 0..max_steps {
        let last = maps.len() - 1;
        let next = apply_t(instance, &maps[last])?;
        let seen = maps.iter().position(|m| *m == next);
        maps.push(next);
        match seen {
            Some(s) if s == last => {
                return Ok(CalibrationTrace {
                    maps,
                    outcome: TraceOutcome::FixedPoint(s),
                })
            }
            Some(s) => {
                return Ok(CalibrationTrace {
                    maps,
                    outcome: TraceOutcome::Cycle {
                        start: s,
                        period: last + 1 - s,
                    },
                })
            }
            None => {}
        }
    }
    Ok(CalibrationTrace {
        maps,
        outcome: TraceOutcome::BudgetExhausted,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedPointClass {
    pub signature: SelectionSignature,
    /// One self-calibrated map inducing `signature`.
    pub representative: PredictionMap,
    pub shows_ads: bool,
    pub ev: Rational,
}

/// A self-calibrated choice for one bucket under `ALL`: show the first
/// `shown_groups` bid groups at threshold `value`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketFixedPoint {
    pub shown_groups: usize,
    pub value: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedPointReport {
    /// Distinct classes in canonical order.
    pub classes: Vec<FixedPointClass>,
    /// More classes exist than were listed.
    pub truncated: bool,
    /// Under `ALL`, the self-calibrated options of each bucket; every
    /// combination of one option per bucket is a fixed point. Empty under `ONE`.
    pub bucket_options: Vec<Vec<BucketFixedPoint>>,
}

impl FixedPointReport {
    /// Total number of classes. Under `ALL` this is known even when the list is
    /// truncated; under `ONE` a truncated report only gives a lower bound.
    pub fn class_count(&self) -> Option<u128> {
        if !self.bucket_options.is_empty() {
            return Some(
                self.bucket_options
                    .iter()
                    .fold(1u128, |n, o| n.saturating_mul(o.len() as u128)),
            );
        }
        (!self.truncated).then_some(self.classes.len() as u128)
    }
}

/// Every fixed-point class of `T`, up to `class_limit` of them.
pub fn enumerate_fixed_points(instance: &ProblemInstance, class_limit: usize) -> Result<FixedPointReport> {
    enumerate_fixed_points_within(instance, class_limit, DEFAULT_CONFIG_BUDGET)
}

/// As [`enumerate_fixed_points`], with an explicit cap on configuration search
/// nodes under `ONE`.
pub fn enumerate_fixed_points_within(
    instance: &ProblemInstance,
    class_limit: usize,
    config_budget: usize,
) -> Result<FixedPointReport> {
    if class_limit == 0 {
        return Err(Error::InvalidArgument("class_limit must be at least 1".into()));
    }
    match instance.mechanism() {
        Mechanism::All => Ok(all_fixed_points(instance, class_limit)),
        Mechanism::One => one_fixed_points(instance, class_limit, config_budget),
    }
}

/// Self-calibrated prefixes of one bucket: showing the first `j` groups at
/// threshold `c`, their mean CTR, keeps exactly those groups above threshold.
pub fn bucket_fixed_points(instance: &ProblemInstance, bucket: usize) -> Vec<BucketFixedPoint> {
    let groups = bid_groups(instance, bucket);
    let mut out = alloc::vec![BucketFixedPoint {
        shown_groups: 0,
        value: Rational::zero(),
    }];
    let (mut mass, mut clicks) = (Rational::zero(), Rational::zero());
    for j in 0..reachable_prefixes(&groups) {
        for &i in &groups[j].ads {
            let w = instance.query_probability(i);
            clicks += w * &instance.ads()[i].ctr;
            mass += w;
        }
        let c = &clicks / &mass;
        let keeps_last = &groups[j].bid * &c >= Rational::from_integer(1.into());
        let drops_next = groups
            .get(j + 1)
            .is_none_or(|g| &g.bid * &c < Rational::from_integer(1.into()));
        if keeps_last && drops_next {
            out.push(BucketFixedPoint {
                shown_groups: j + 1,
                value: c,
            });
        }
    }
    out
}

fn class_of(instance: &ProblemInstance, map: PredictionMap) -> FixedPointClass {
    let signature = selection_signature(instance, &map).expect("map sized for instance");
    let ev = expected_value(instance, &map).expect("map sized for instance");
    FixedPointClass {
        shows_ads: signature.shows_anything(),
        signature,
        representative: map,
        ev,
    }
}

fn all_fixed_points(instance: &ProblemInstance, class_limit: usize) -> FixedPointReport {
    let options: Vec<Vec<BucketFixedPoint>> = (1..=instance.buckets())
        .map(|z| bucket_fixed_points(instance, z))
        .collect();
    let total = options.iter().fold(1u128, |n, o| n.saturating_mul(o.len() as u128));
    let mut classes = Vec::new();
    let mut idx = alloc::vec![0usize; options.len()];
    while classes.len() < class_limit {
        let map = PredictionMap::from_trusted(idx.iter().zip(&options).map(|(&i, o)| o[i].value.clone()).collect());
        debug_assert_eq!(apply_t(instance, &map).as_ref(), Ok(&map));
        classes.push(class_of(instance, map));
        // Odometer with the last bucket turning fastest.
        let mut pos = idx.len();
        loop {
            if pos == 0 {
                return FixedPointReport {
                    classes,
                    truncated: false,
                    bucket_options: options,
                };
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < options[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
    FixedPointReport {
        truncated: total > classes.len() as u128,
        classes,
        bucket_options: options,
    }
}

struct FixedPointSearch<'a> {
    instance: &'a ProblemInstance,
    limit: usize,
    seen: BTreeSet<SelectionSignature>,
    classes: Vec<FixedPointClass>,
    truncated: bool,
}

impl ConfigVisitor for FixedPointSearch<'_> {
    fn leaf(
        &mut self,
        config: &WinnerConfiguration,
        _value: &Rational,
        _system: &RatioSystem,
        _potentials: &[PathWeight],
    ) -> ControlFlow<()> {
        let signature = config.signature(self.instance);
        if self.seen.contains(&signature) {
            return ControlFlow::Continue(());
        }
        // Served buckets must sit at their observed CTR, which therefore has
        // to be positive: a zero bucket shows nothing.
        let mut fixed = Vec::new();
        for (z, observed) in config.observed(self.instance).into_iter().enumerate() {
            match observed {
                Some(c) if c.is_zero() => return ControlFlow::Continue(()),
                Some(c) => fixed.push((z + 1, c)),
                None => {}
            }
        }
        let Some(map) = one::feasible_with_values(self.instance, config, &fixed) else {
            return ControlFlow::Continue(());
        };
        debug_assert_eq!(apply_t(self.instance, &map).as_ref(), Ok(&map));
        if self.classes.len() == self.limit {
            self.truncated = true;
            return ControlFlow::Break(());
        }
        self.seen.insert(signature);
        self.classes.push(class_of(self.instance, map));
        ControlFlow::Continue(())
    }
}

fn one_fixed_points(instance: &ProblemInstance, class_limit: usize, config_budget: usize) -> Result<FixedPointReport> {
    let mut search = FixedPointSearch {
        instance,
        limit: class_limit,
        seen: BTreeSet::new(),
        classes: Vec::new(),
        truncated: false,
    };
    one::search(instance, config_budget, &mut search)?;
    Ok(FixedPointReport {
        classes: search.classes,
        truncated: search.truncated,
        bucket_options: Vec::new(),
    })
}

/// Human-readable name of a trace outcome, e.g. `cycle(start 0, period 2)`.
pub fn describe_outcome(outcome: &TraceOutcome) -> alloc::string::String {
    match outcome {
        TraceOutcome::FixedPoint(i) => format!("fixed point at step {i}"),
        TraceOutcome::Cycle { start, period } => format!("cycle from step {start} with period {period}"),
        TraceOutcome::BudgetExhausted => "step budget exhausted".into(),
    }
}
