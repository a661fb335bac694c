//! Winner configurations under single-ad selection.
//!
//! Efficiency and observed CTRs under `ONE` depend on a map only through which
//! candidates attain the top positive score on each query. A
//! [`WinnerConfiguration`] pins that down, and its feasibility is a system of
//! ratio constraints between bucket values (see [`RatioSystem`]). Enumerating
//! configurations therefore makes the search over maps finite and exact.
//!
//! Canonical order: exclusion sets by increasing bit mask over the used
//! buckets (ascending); queries in instance order; the options of a query by
//! decreasing value, then by increasing bit mask over its available buckets.
//! "First" always means first in this order.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use num_traits::Zero;

use super::ratio_system::{PathWeight, RatioSystem};
use crate::model::{Mechanism, PredictionMap, ProblemInstance};
use crate::selection::SelectionSignature;
use crate::{Error, Rational, Result};

/// Default cap on search nodes for the exhaustive `ONE` solvers.
pub const DEFAULT_CONFIG_BUDGET: usize = 2_000_000;

const MAX_QUERY_BUCKETS: usize = 16;
const MAX_USED_BUCKETS: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WinnerConfiguration {
    /// Per query, in instance order: indices of the tied winning ads, or `None`
    /// when nothing shows.
    pub winners: Vec<Option<Vec<usize>>>,
    /// Buckets held at `f(z) = 0`.
    pub excluded: BTreeSet<usize>,
}

impl WinnerConfiguration {
    /// Builds a configuration from ad ids: `(query id, winning ad ids)` for each
    /// query that shows something. Queries not listed show nothing.
    pub fn from_ids(instance: &ProblemInstance, winners: &[(&str, &[&str])], excluded: &[usize]) -> Result<Self> {
        let mut out = alloc::vec![None; instance.queries().len()];
        for (q, ads) in winners {
            let qi = instance
                .queries()
                .position(&(*q).into())
                .ok_or_else(|| Error::UnknownQuery((*q).into()))?;
            let ids = ads
                .iter()
                .map(|id| {
                    instance
                        .ad_index(&(*id).into())
                        .ok_or_else(|| Error::UnknownAd((*id).into()))
                })
                .collect::<Result<Vec<_>>>()?;
            out[qi] = Some(ids);
        }
        Ok(WinnerConfiguration {
            winners: out,
            excluded: excluded.iter().copied().collect(),
        })
    }

    /// `Pr(ad i shows | q_i)` for every ad.
    pub fn conditional(&self, instance: &ProblemInstance) -> Vec<Rational> {
        let mut c = alloc::vec![Rational::zero(); instance.ads().len()];
        for w in self.winners.iter().flatten() {
            let share = Rational::new(1.into(), w.len().into());
            for &i in w {
                c[i] = share.clone();
            }
        }
        c
    }

    pub fn signature(&self, instance: &ProblemInstance) -> SelectionSignature {
        SelectionSignature(self.conditional(instance))
    }

    fn weights(&self, instance: &ProblemInstance) -> Vec<Rational> {
        self.conditional(instance)
            .into_iter()
            .enumerate()
            .map(|(i, c)| c * instance.query_probability(i))
            .collect()
    }

    /// Expected value per query of any map realizing this configuration.
    pub fn value(&self, instance: &ProblemInstance) -> Rational {
        let cost = instance.mechanism().cost();
        self.weights(instance)
            .iter()
            .zip(instance.ads())
            .map(|(w, ad)| w * (ad.value() - &cost))
            .sum()
    }

    /// `E_f[p | z]` for each bucket, `None` where nothing in the bucket shows.
    pub fn observed(&self, instance: &ProblemInstance) -> Vec<Option<Rational>> {
        let weights = self.weights(instance);
        (1..=instance.buckets())
            .map(|z| crate::metrics::weighted_ctr(&weights, instance, &crate::metrics::Condition::bucket(z)))
            .collect()
    }
}

fn require_one(instance: &ProblemInstance) -> Result<()> {
    if instance.mechanism() != Mechanism::One {
        return Err(Error::WrongMechanism {
            expected: Mechanism::One,
        });
    }
    Ok(())
}

fn check_config(instance: &ProblemInstance, config: &WinnerConfiguration) -> Result<()> {
    let bad = |msg: alloc::string::String| Err(Error::MalformedConfig(msg));
    if config.winners.len() != instance.queries().len() {
        return bad(format!(
            "{} query entries for {} queries",
            config.winners.len(),
            instance.queries().len()
        ));
    }
    if let Some(z) = config.excluded.iter().find(|&&z| z == 0 || z > instance.buckets()) {
        return bad(format!("excluded bucket {z} is out of range"));
    }
    for (q, (winners, ads)) in config.winners.iter().zip(instance.ads_by_query()).enumerate() {
        let qid = &instance.queries().entries()[q].0;
        match winners {
            Some(w) => {
                if w.is_empty() {
                    return bad(format!("query {qid} has an empty winner set"));
                }
                let mut seen = BTreeSet::new();
                for &i in w {
                    if !ads.contains(&i) {
                        return bad(format!("ad #{i} is not a candidate of query {qid}"));
                    }
                    if !seen.insert(i) {
                        return bad(format!("ad #{i} listed twice for query {qid}"));
                    }
                    if config.excluded.contains(&instance.ads()[i].bucket) {
                        return bad(format!(
                            "winner {} of query {qid} sits in an excluded bucket",
                            instance.ads()[i].id
                        ));
                    }
                }
            }
            None => {
                if let Some(&i) = ads
                    .iter()
                    .find(|&&i| !config.excluded.contains(&instance.ads()[i].bucket))
                {
                    return bad(format!(
                        "query {qid} shows nothing but candidate {} is not excluded",
                        instance.ads()[i].id
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Ratio constraints making `winners` the exact top-scoring set among the
/// query's non-excluded candidates. Bucket `z` is node `z - 1`.
fn push_query_constraints(
    system: &mut RatioSystem,
    instance: &ProblemInstance,
    candidates: &[usize],
    excluded: &BTreeSet<usize>,
    winners: &[usize],
) {
    let ads = instance.ads();
    let lead = &ads[winners[0]];
    for &w in &winners[1..] {
        let ad = &ads[w];
        if ad.bucket != lead.bucket || ad.bid != lead.bid {
            system.equal(ad.bucket - 1, lead.bucket - 1, &(&lead.bid / &ad.bid));
        }
    }
    for &l in candidates {
        let ad = &ads[l];
        if winners.contains(&l) || excluded.contains(&ad.bucket) {
            continue;
        }
        system.at_least(lead.bucket - 1, ad.bucket - 1, &(&ad.bid / &lead.bid), true);
    }
}

fn config_system(instance: &ProblemInstance, config: &WinnerConfiguration, nodes: usize) -> RatioSystem {
    let mut system = RatioSystem::new(nodes);
    for (w, ads) in config.winners.iter().zip(instance.ads_by_query()) {
        if let Some(w) = w {
            push_query_constraints(&mut system, instance, &ads, &config.excluded, w);
        }
    }
    system
}

/// Scales positive node values into `(0, 1]` and zeroes excluded buckets.
pub(crate) fn witness_map(k: usize, excluded: &BTreeSet<usize>, values: &[Rational]) -> PredictionMap {
    let max = (1..=k)
        .filter(|z| !excluded.contains(z))
        .map(|z| &values[z - 1])
        .max()
        .cloned();
    let mut map = PredictionMap::zeros(k);
    if let Some(max) = max {
        for z in (1..=k).filter(|z| !excluded.contains(z)) {
            map.set(z, &values[z - 1] / &max);
        }
    }
    map
}

/// A map realizing `config` exactly, or `None` when no map can.
///
/// The witness is zero exactly on the excluded buckets and lies in `(0, 1]`
/// everywhere else.
pub fn feasible_config(instance: &ProblemInstance, config: &WinnerConfiguration) -> Result<Option<PredictionMap>> {
    require_one(instance)?;
    check_config(instance, config)?;
    let system = config_system(instance, config, instance.buckets());
    Ok(system
        .solve()
        .map(|values| witness_map(instance.buckets(), &config.excluded, &values)))
}

/// A map realizing `config` that additionally pins each bucket in `fixed` to the
/// given value (which must be positive). Remaining non-excluded buckets stay
/// in `(0, 1]`.
pub(crate) fn feasible_with_values(
    instance: &ProblemInstance,
    config: &WinnerConfiguration,
    fixed: &[(usize, Rational)],
) -> Option<PredictionMap> {
    let k = instance.buckets();
    let anchor = k;
    let mut system = config_system(instance, config, k + 1);
    for z in (1..=k).filter(|z| !config.excluded.contains(z)) {
        match fixed.iter().find(|(b, _)| *b == z) {
            Some((_, v)) => system.equal(z - 1, anchor, v),
            None => system.at_least(anchor, z - 1, &Rational::from_integer(1.into()), false),
        }
    }
    let values = system.solve()?;
    let scale = &values[anchor];
    let mut map = PredictionMap::zeros(k);
    for z in (1..=k).filter(|z| !config.excluded.contains(z)) {
        map.set(z, &values[z - 1] / scale);
    }
    Some(map)
}

struct QueryOption {
    winners: Vec<usize>,
    value: Rational,
}

fn query_options(
    instance: &ProblemInstance,
    query: usize,
    candidates: &[usize],
    excluded: &BTreeSet<usize>,
) -> Result<Vec<QueryOption>> {
    let ads = instance.ads();
    let available: Vec<usize> = candidates
        .iter()
        .map(|&i| ads[i].bucket)
        .filter(|z| !excluded.contains(z))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if available.len() > MAX_QUERY_BUCKETS {
        return Err(Error::TooLarge {
            what: "buckets on one query",
            size: available.len(),
            max: MAX_QUERY_BUCKETS,
        });
    }
    let tops: Vec<Vec<usize>> = available
        .iter()
        .map(|&z| {
            let in_bucket = candidates.iter().filter(|&&i| ads[i].bucket == z);
            let best = in_bucket.clone().map(|&i| &ads[i].bid).max().cloned();
            in_bucket
                .filter(|&&i| Some(&ads[i].bid) == best.as_ref())
                .copied()
                .collect()
        })
        .collect();
    let pq = &instance.queries().entries()[query].1;
    let cost = instance.mechanism().cost();
    let mut options: Vec<(u32, QueryOption)> = (1u32..(1 << available.len()))
        .map(|mask| {
            let mut winners: Vec<usize> = (0..available.len())
                .filter(|b| mask & (1 << b) != 0)
                .flat_map(|b| tops[b].iter().copied())
                .collect();
            winners.sort_unstable();
            let total: Rational = winners.iter().map(|&i| ads[i].value() - &cost).sum();
            let value = pq * total / Rational::from_integer(winners.len().into());
            (mask, QueryOption { winners, value })
        })
        .collect();
    options.sort_by(|(ma, a), (mb, b)| b.value.cmp(&a.value).then(ma.cmp(mb)));
    Ok(options.into_iter().map(|(_, o)| o).collect())
}

/// Receives every feasible configuration reached by [`search`].
pub(crate) trait ConfigVisitor {
    /// Skip the subtree when the partial value plus the best achievable rest
    /// cannot matter.
    fn prune(&self, _partial: &Rational, _rest: &Rational) -> bool {
        false
    }

    fn leaf(
        &mut self,
        config: &WinnerConfiguration,
        value: &Rational,
        system: &RatioSystem,
        potentials: &[PathWeight],
    ) -> ControlFlow<()>;
}

struct Dfs<'a, V> {
    instance: &'a ProblemInstance,
    groups: &'a [Vec<usize>],
    options: Vec<Vec<QueryOption>>,
    rest: Vec<Rational>,
    budget: usize,
    nodes: &'a mut usize,
    visitor: &'a mut V,
    config: WinnerConfiguration,
    system: RatioSystem,
}

impl<V: ConfigVisitor> Dfs<'_, V> {
    fn descend(&mut self, depth: usize, partial: Rational, potentials: Vec<PathWeight>) -> Result<ControlFlow<()>> {
        if self.visitor.prune(&partial, &self.rest[depth]) {
            return Ok(ControlFlow::Continue(()));
        }
        if depth == self.groups.len() {
            return Ok(self.visitor.leaf(&self.config, &partial, &self.system, &potentials));
        }
        if self.options[depth].is_empty() {
            self.config.winners[depth] = None;
            return self.descend(depth + 1, partial, potentials);
        }
        for o in 0..self.options[depth].len() {
            *self.nodes += 1;
            if *self.nodes > self.budget {
                return Err(Error::BudgetExceeded { budget: self.budget });
            }
            let mark = self.system.edge_count();
            let option = &self.options[depth][o];
            push_query_constraints(
                &mut self.system,
                self.instance,
                &self.groups[depth],
                &self.config.excluded,
                &option.winners,
            );
            if let Some(next) = self.system.potentials_from(potentials.clone()) {
                self.config.winners[depth] = Some(option.winners.clone());
                let value = &partial + &option.value;
                let flow = self.descend(depth + 1, value, next)?;
                if flow.is_break() {
                    self.system.truncate(mark);
                    return Ok(flow);
                }
            }
            self.system.truncate(mark);
        }
        self.config.winners[depth] = None;
        Ok(ControlFlow::Continue(()))
    }
}

/// Walks every feasible configuration in canonical order. `budget` caps the
/// number of feasibility checks.
pub(crate) fn search<V: ConfigVisitor>(instance: &ProblemInstance, budget: usize, visitor: &mut V) -> Result<()> {
    require_one(instance)?;
    let groups = instance.ads_by_query();
    let used = instance.used_buckets();
    if used.len() > MAX_USED_BUCKETS {
        return Err(Error::TooLarge {
            what: "used buckets",
            size: used.len(),
            max: MAX_USED_BUCKETS,
        });
    }
    let k = instance.buckets();
    let mut nodes = 0usize;
    for mask in 0u64..(1 << used.len()) {
        let excluded: BTreeSet<usize> = used
            .iter()
            .enumerate()
            .filter(|(b, _)| mask & (1 << b) != 0)
            .map(|(_, &z)| z)
            .collect();
        let options = groups
            .iter()
            .enumerate()
            .map(|(q, ads)| query_options(instance, q, ads, &excluded))
            .collect::<Result<Vec<_>>>()?;
        let mut rest = alloc::vec![Rational::zero(); groups.len() + 1];
        for q in (0..groups.len()).rev() {
            let best = options[q].first().map_or_else(Rational::zero, |o| o.value.clone());
            rest[q] = &rest[q + 1] + best.max(Rational::zero());
        }
        let system = RatioSystem::new(k);
        let start = system.potentials().expect("empty system is feasible");
        let mut dfs = Dfs {
            instance,
            groups: &groups,
            options,
            rest,
            budget,
            nodes: &mut nodes,
            visitor: &mut *visitor,
            config: WinnerConfiguration {
                winners: alloc::vec![None; groups.len()],
                excluded,
            },
            system,
        };
        if dfs.descend(0, Rational::zero(), start)?.is_break() {
            break;
        }
    }
    Ok(())
}

struct Collect {
    k: usize,
    found: Vec<(WinnerConfiguration, PredictionMap)>,
}

impl ConfigVisitor for Collect {
    fn leaf(
        &mut self,
        config: &WinnerConfiguration,
        _value: &Rational,
        system: &RatioSystem,
        potentials: &[PathWeight],
    ) -> ControlFlow<()> {
        let values = system.witness(potentials);
        self.found
            .push((config.clone(), witness_map(self.k, &config.excluded, &values)));
        ControlFlow::Continue(())
    }
}

/// Every feasible configuration with a witness map, in canonical order.
pub fn feasible_configurations(
    instance: &ProblemInstance,
    budget: usize,
) -> Result<Vec<(WinnerConfiguration, PredictionMap)>> {
    let mut collect = Collect {
        k: instance.buckets(),
        found: Vec::new(),
    };
    search(instance, budget, &mut collect)?;
    Ok(collect.found)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneOptimum {
    pub map: PredictionMap,
    pub ev: Rational,
    pub config: WinnerConfiguration,
}

struct BranchAndBound {
    k: usize,
    best: Option<OneOptimum>,
}

impl ConfigVisitor for BranchAndBound {
    fn prune(&self, partial: &Rational, rest: &Rational) -> bool {
        self.best.as_ref().is_some_and(|b| partial + rest <= b.ev)
    }

    fn leaf(
        &mut self,
        config: &WinnerConfiguration,
        value: &Rational,
        system: &RatioSystem,
        potentials: &[PathWeight],
    ) -> ControlFlow<()> {
        if self.best.as_ref().is_none_or(|b| *value > b.ev) {
            let values = system.witness(potentials);
            self.best = Some(OneOptimum {
                map: witness_map(self.k, &config.excluded, &values),
                ev: value.clone(),
                config: config.clone(),
            });
        }
        ControlFlow::Continue(())
    }
}

/// Exact efficiency-maximizing map under single-ad selection.
///
/// Branch and bound over winner configurations: a subtree is skipped only when
/// it cannot beat the incumbent strictly, so the configuration returned is the
/// first optimal one in canonical order.
pub fn optimal_map_one_exact(instance: &ProblemInstance, config_budget: usize) -> Result<OneOptimum> {
    let mut bb = BranchAndBound {
        k: instance.buckets(),
        best: None,
    };
    search(instance, config_budget, &mut bb)?;
    Ok(bb.best.expect("the all-excluded configuration is always feasible"))
}
