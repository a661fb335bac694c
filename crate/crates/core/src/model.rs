//! Queries, ads, mechanisms, prediction maps and instance validation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_traits::{One, Signed, Zero};

use crate::rational::{format_rational, is_probability};
use crate::{Error, Rational, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AdId(pub String);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QueryId(pub String);

impl fmt::Display for AdId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for QueryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AdId {
    fn from(s: &str) -> Self {
        AdId(s.to_string())
    }
}

impl From<&str> for QueryId {
    fn from(s: &str) -> Self {
        QueryId(s.to_string())
    }
}

impl From<String> for AdId {
    fn from(s: String) -> Self {
        AdId(s)
    }
}

impl From<String> for QueryId {
    fn from(s: String) -> Self {
        QueryId(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mechanism {
    /// A single top-scoring ad per query; ties are split uniformly.
    One,
    /// Every ad with `b * f(z) >= 1`.
    All,
}

impl Mechanism {
    /// Per-impression cost in the efficiency accounting.
    pub fn cost(self) -> Rational {
        match self {
            Mechanism::One => Rational::zero(),
            Mechanism::All => Rational::one(),
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::One => "ONE",
            Mechanism::All => "ALL",
        })
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ONE" | "one" => Ok(Mechanism::One),
            "ALL" | "all" => Ok(Mechanism::All),
            other => Err(Error::InvalidArgument(format!("unknown mechanism `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ad {
    pub id: AdId,
    pub query: QueryId,
    /// True click probability.
    pub ctr: Rational,
    /// Value of a click to the advertiser.
    pub bid: Rational,
    /// Raw prediction, `1..=K`.
    pub bucket: usize,
}

impl Ad {
    pub fn new(id: impl Into<AdId>, query: impl Into<QueryId>, ctr: Rational, bid: Rational, bucket: usize) -> Self {
        Ad {
            id: id.into(),
            query: query.into(),
            ctr,
            bid,
            bucket,
        }
    }

    /// `p * b`, the expected value of a click-weighted impression before cost.
    pub fn value(&self) -> Rational {
        &self.ctr * &self.bid
    }
}

/// Query probabilities in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryDistribution {
    entries: Vec<(QueryId, Rational)>,
}

impl QueryDistribution {
    pub fn new(entries: Vec<(QueryId, Rational)>) -> Self {
        QueryDistribution { entries }
    }

    /// `n` queries named by `name(i)`, each with probability `1/n`.
    pub fn uniform(n: usize, name: impl Fn(usize) -> String) -> Self {
        let p = Rational::new(1.into(), n.into());
        QueryDistribution {
            entries: (0..n).map(|i| (QueryId(name(i)), p.clone())).collect(),
        }
    }

    pub fn entries(&self) -> &[(QueryId, Rational)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, q: &QueryId) -> Option<usize> {
        self.entries.iter().position(|(id, _)| id == q)
    }

    pub fn probability(&self, q: &QueryId) -> Option<&Rational> {
        self.entries.iter().find(|(id, _)| id == q).map(|(_, p)| p)
    }
}

/// An offending field and what is wrong with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Queries, ads, bucket count and selection mechanism.
///
/// Construction does not validate; call [`validate`] (or use
/// [`ProblemInstance::checked`]) before handing an instance to the solvers.
/// Operations on an invalid instance may panic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemInstance {
    buckets: usize,
    ads: Vec<Ad>,
    queries: QueryDistribution,
    mechanism: Mechanism,
    ad_query: Vec<Option<usize>>,
}

impl ProblemInstance {
    pub fn new(buckets: usize, ads: Vec<Ad>, queries: QueryDistribution, mechanism: Mechanism) -> Self {
        let ad_query = ads.iter().map(|ad| queries.position(&ad.query)).collect();
        ProblemInstance {
            buckets,
            ads,
            queries,
            mechanism,
            ad_query,
        }
    }

    /// Builds and validates, reporting the first violation.
    pub fn checked(buckets: usize, ads: Vec<Ad>, queries: QueryDistribution, mechanism: Mechanism) -> Result<Self> {
        let instance = Self::new(buckets, ads, queries, mechanism);
        match validate(&instance).into_iter().next() {
            None => Ok(instance),
            Some(v) => Err(Error::InvalidArgument(v.to_string())),
        }
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn ads(&self) -> &[Ad] {
        &self.ads
    }

    pub fn queries(&self) -> &QueryDistribution {
        &self.queries
    }

    pub fn mechanism(&self) -> Mechanism {
        self.mechanism
    }

    /// Same ads and queries under another mechanism.
    pub fn with_mechanism(&self, mechanism: Mechanism) -> Self {
        ProblemInstance {
            mechanism,
            ..self.clone()
        }
    }

    /// Same instance with every bid multiplied by `factor`.
    pub fn with_scaled_bids(&self, factor: &Rational) -> Self {
        let ads = self
            .ads
            .iter()
            .map(|ad| Ad {
                bid: &ad.bid * factor,
                ..ad.clone()
            })
            .collect();
        ProblemInstance::new(self.buckets, ads, self.queries.clone(), self.mechanism)
    }

    /// Index into [`QueryDistribution::entries`] of ad `i`'s query.
    ///
    /// Panics if the ad names an unknown query.
    pub fn query_index(&self, ad: usize) -> usize {
        self.ad_query[ad].expect("ad refers to an unknown query; validate the instance first")
    }

    /// `Pr^Q(q_i)` of ad `i`'s query.
    pub fn query_probability(&self, ad: usize) -> &Rational {
        &self.queries.entries[self.query_index(ad)].1
    }

    pub fn ad_index(&self, id: &AdId) -> Option<usize> {
        self.ads.iter().position(|ad| &ad.id == id)
    }

    /// Ad indices grouped by query index, in input order.
    pub fn ads_by_query(&self) -> Vec<Vec<usize>> {
        let mut groups = alloc::vec![Vec::new(); self.queries.len()];
        for (i, q) in self.ad_query.iter().enumerate() {
            if let Some(q) = q {
                groups[*q].push(i);
            }
        }
        groups
    }

    /// Buckets that hold at least one ad, ascending.
    pub fn used_buckets(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.ads.iter().map(|a| a.bucket).collect();
        set.into_iter().collect()
    }
}

/// Every invariant violation in `instance`, each with a path to the field.
pub fn validate(instance: &ProblemInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |path: String, message: String| out.push(Violation { path, message });

    if instance.buckets == 0 {
        push("buckets".into(), "bucket count must be positive".into());
    }

    let mut seen_queries = BTreeSet::new();
    let mut total = Rational::zero();
    for (id, p) in instance.queries.entries() {
        if !seen_queries.insert(id.clone()) {
            push(format!("queries[{id}]"), "duplicate query id".into());
        }
        if !p.is_positive() {
            push(
                format!("queries[{id}]"),
                format!("probability {} is not positive", format_rational(p)),
            );
        }
        total += p;
    }
    if !total.is_one() {
        push(
            "queries".into(),
            format!("probabilities sum to {}, not 1", format_rational(&total)),
        );
    }

    let mut seen_ads = BTreeMap::new();
    for (i, ad) in instance.ads.iter().enumerate() {
        let path = format!("ads[{}]", ad.id);
        if let Some(prev) = seen_ads.insert(ad.id.clone(), i) {
            push(path.clone(), format!("duplicate ad id (also at position {prev})"));
        }
        if !seen_queries.contains(&ad.query) {
            push(format!("{path}.query"), format!("unknown query `{}`", ad.query));
        }
        if !is_probability(&ad.ctr) {
            push(
                format!("{path}.ctr"),
                format!("{} is outside [0, 1]", format_rational(&ad.ctr)),
            );
        }
        if !ad.bid.is_positive() {
            push(
                format!("{path}.bid"),
                format!("{} is not positive", format_rational(&ad.bid)),
            );
        }
        if ad.bucket == 0 || ad.bucket > instance.buckets {
            push(
                format!("{path}.bucket"),
                format!("{} is outside 1..={}", ad.bucket, instance.buckets),
            );
        }
    }
    out
}

/// Ads eligible for query `q`, in input order.
pub fn candidates<'a>(instance: &'a ProblemInstance, q: &QueryId) -> Result<Vec<&'a Ad>> {
    if instance.queries.position(q).is_none() {
        return Err(Error::UnknownQuery(q.0.clone()));
    }
    Ok(instance.ads.iter().filter(|ad| &ad.query == q).collect())
}

/// A value in `[0, 1]` for each of the `K` buckets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PredictionMap(Vec<Rational>);

impl PredictionMap {
    pub fn new(values: Vec<Rational>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !is_probability(v)) {
            return Err(Error::MapValueOutOfRange(format_rational(bad)));
        }
        Ok(PredictionMap(values))
    }

    /// For values already known to be probabilities.
    pub(crate) fn from_trusted(values: Vec<Rational>) -> Self {
        debug_assert!(values.iter().all(is_probability));
        PredictionMap(values)
    }

    pub fn zeros(k: usize) -> Self {
        PredictionMap(alloc::vec![Rational::zero(); k])
    }

    pub fn constant(k: usize, value: Rational) -> Result<Self> {
        Self::new(alloc::vec![value; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Value for a 1-based bucket.
    pub fn get(&self, bucket: usize) -> &Rational {
        &self.0[bucket - 1]
    }

    pub fn values(&self) -> &[Rational] {
        &self.0
    }

    pub fn into_values(self) -> Vec<Rational> {
        self.0
    }

    pub(crate) fn set(&mut self, bucket: usize, value: Rational) {
        self.0[bucket - 1] = value;
    }

    pub(crate) fn check_len(&self, instance: &ProblemInstance) -> Result<()> {
        if self.len() != instance.buckets() {
            return Err(Error::MapLength {
                expected: instance.buckets(),
                found: self.len(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for PredictionMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str("]")
    }
}
