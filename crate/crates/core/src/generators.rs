//! Fixed example instances and seeded random instance families.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::ops::RangeInclusive;
use core::str::FromStr;

use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Ad, Mechanism, ProblemInstance, QueryDistribution};
use crate::rational::{int, is_probability, parse_rational, ratio};
use crate::{Error, Rational, Result};

/// The named example instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fixture {
    /// One query, four ads; five threshold fixed points.
    Fig1ManyFixedPoints,
    /// One `(1/2, 2)` ad, `n` ads `(1, 19/10)` and `n` ads `(0, 9/5)`.
    AllThreeClass(usize),
    /// `(7/10, 4)` and `(1/10, 2)`: the threshold cycles between two values.
    AllNoFixedPoint,
    /// Two queries where the efficient order can never be self-calibrated.
    OneQ1Counterexample,
    /// Four queries, bids 1, no self-calibrated map that keeps both buckets live.
    OneNoFixedPoint,
    /// One query, ad `i` alone in bucket `i` with `p_i = 1 / b_i`.
    OneExponential(usize),
    SiNotE1,
    E2NotSi,
    /// Mirrored copies of the first two queries with bids scaled by `eps`.
    SiNotNice(Rational),
}

impl Fixture {
    pub const NAMES: [&'static str; 9] = [
        "fig1_many_fixed_points",
        "all_three_class(n)",
        "all_no_fixed_point",
        "one_q1_counterexample",
        "one_no_fixed_point",
        "one_exponential(n)",
        "si_not_e1",
        "e2_not_si",
        "si_not_nice(eps)",
    ];
}

impl fmt::Display for Fixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fixture::Fig1ManyFixedPoints => f.write_str("fig1_many_fixed_points"),
            Fixture::AllThreeClass(n) => write!(f, "all_three_class({n})"),
            Fixture::AllNoFixedPoint => f.write_str("all_no_fixed_point"),
            Fixture::OneQ1Counterexample => f.write_str("one_q1_counterexample"),
            Fixture::OneNoFixedPoint => f.write_str("one_no_fixed_point"),
            Fixture::OneExponential(n) => write!(f, "one_exponential({n})"),
            Fixture::SiNotE1 => f.write_str("si_not_e1"),
            Fixture::E2NotSi => f.write_str("e2_not_si"),
            Fixture::SiNotNice(eps) => write!(f, "si_not_nice({})", crate::rational::format_rational(eps)),
        }
    }
}

impl FromStr for Fixture {
    type Err = Error;

    /// Accepts `name` or `name(arg)`; parameterized fixtures default to
    /// `n = 10`, `n = 3` and `eps = 1/100`.
    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownFixture(s.to_string());
        let (name, arg) = match s.split_once('(') {
            Some((name, rest)) => (name, Some(rest.strip_suffix(')').ok_or_else(unknown)?.trim())),
            None => (s, None),
        };
        let count = |default: usize| -> Result<usize> { arg.map_or(Ok(default), |a| a.parse().map_err(|_| unknown())) };
        let fixture = match name.trim() {
            "fig1_many_fixed_points" => Fixture::Fig1ManyFixedPoints,
            "all_three_class" => Fixture::AllThreeClass(count(10)?),
            "all_no_fixed_point" => Fixture::AllNoFixedPoint,
            "one_q1_counterexample" => Fixture::OneQ1Counterexample,
            "one_no_fixed_point" => Fixture::OneNoFixedPoint,
            "one_exponential" => Fixture::OneExponential(count(3)?),
            "si_not_e1" => Fixture::SiNotE1,
            "e2_not_si" => Fixture::E2NotSi,
            "si_not_nice" => {
                let eps = arg.map_or(Ok(ratio(1, 100)), parse_rational)?;
                if eps <= Rational::zero() {
                    return Err(Error::InvalidArgument(format!("eps must be positive in `{s}`")));
                }
                Fixture::SiNotNice(eps)
            }
            _ => return Err(unknown()),
        };
        if arg.is_some() && !matches!(name, "all_three_class" | "one_exponential" | "si_not_nice") {
            return Err(unknown());
        }
        Ok(fixture)
    }
}

fn queries(n: usize) -> QueryDistribution {
    QueryDistribution::uniform(n, |i| format!("q{}", i + 1))
}

fn ad(id: &str, query: usize, p: Rational, b: Rational, z: usize) -> Ad {
    Ad::new(id, format!("q{query}").as_str(), p, b, z)
}

pub fn paper_fixture(fixture: &Fixture) -> ProblemInstance {
    let one = |ads: Vec<Ad>, k: usize, nq: usize| ProblemInstance::new(k, ads, queries(nq), Mechanism::One);
    match fixture {
        Fixture::Fig1ManyFixedPoints => {
            prefix_family(&[ratio(1, 10), ratio(1, 5), ratio(3, 10), ratio(2, 5)]).expect("increasing CTRs")
        }
        Fixture::AllThreeClass(n) => {
            let mut ads = alloc::vec![ad("A", 1, ratio(1, 2), int(2), 1)];
            ads.extend((1..=*n).map(|i| ad(&format!("B{i}"), 1, int(1), ratio(19, 10), 1)));
            ads.extend((1..=*n).map(|i| ad(&format!("C{i}"), 1, int(0), ratio(9, 5), 1)));
            ProblemInstance::new(1, ads, queries(1), Mechanism::All)
        }
        Fixture::AllNoFixedPoint => ProblemInstance::new(
            1,
            alloc::vec![ad("A", 1, ratio(7, 10), int(4), 1), ad("B", 1, ratio(1, 10), int(2), 1),],
            queries(1),
            Mechanism::All,
        ),
        Fixture::OneQ1Counterexample => one(
            alloc::vec![
                ad("A", 1, int(1), int(2), 1),
                ad("B", 1, int(0), int(2), 2),
                ad("C", 2, int(1), int(2), 2),
                ad("D", 2, int(0), int(1), 1),
            ],
            2,
            2,
        ),
        Fixture::OneNoFixedPoint => one(
            alloc::vec![
                ad("A", 1, ratio(1, 2), int(1), 1),
                ad("B", 2, ratio(3, 5), int(1), 2),
                ad("C", 3, ratio(1, 2), int(1), 1),
                ad("D", 3, ratio(3, 5), int(1), 2),
                ad("E", 4, ratio(1, 5), int(1), 2),
                ad("F", 4, ratio(3, 10), int(1), 1),
            ],
            2,
            4,
        ),
        Fixture::OneExponential(n) => one(
            (1..=*n)
                .map(|i| {
                    let b = (i + 1) as i64;
                    ad(&format!("a{i}"), 1, ratio(1, b), int(b), i)
                })
                .collect(),
            *n,
            1,
        ),
        Fixture::SiNotE1 => one(
            alloc::vec![
                ad("A", 1, ratio(1, 10), int(1), 1),
                ad("B", 1, ratio(1, 5), int(2), 1),
                ad("C", 2, ratio(1, 10), int(2), 1),
                ad("D", 2, ratio(1, 5), int(1), 1),
            ],
            1,
            2,
        ),
        Fixture::E2NotSi => one(
            alloc::vec![
                ad("A", 1, ratio(1, 5), int(2), 1),
                ad("B", 1, ratio(1, 10), int(1), 1),
                ad("E", 1, int(1), int(9), 2),
                ad("C", 2, ratio(1, 10), int(2), 1),
                ad("D", 2, ratio(1, 5), int(1), 1),
            ],
            2,
            2,
        ),
        Fixture::SiNotNice(eps) => one(
            alloc::vec![
                ad("A", 1, int(1), int(2), 1),
                ad("B", 1, int(0), int(2), 2),
                ad("C", 2, int(1), int(2), 2),
                ad("D", 2, int(0), int(1), 1),
                ad("A'", 3, int(0), eps * int(2), 1),
                ad("B'", 3, int(1), eps * int(2), 2),
                ad("C'", 4, int(0), eps * int(2), 2),
                ad("D'", 4, int(1), eps.clone(), 1),
            ],
            2,
            4,
        ),
    }
}

/// Single-query `ALL` instance with ad `i` at CTR `ctrs[i]` and bid
/// `i / (p_1 + ... + p_i)`, so showing the first `i` ads is self-calibrated at
/// threshold `1 / b_i` for every `i`.
pub fn prefix_family(ctrs: &[Rational]) -> Result<ProblemInstance> {
    if ctrs.iter().any(|p| !is_probability(p) || p.is_zero()) {
        return Err(Error::InvalidArgument("prefix CTRs must lie in (0, 1]".into()));
    }
    if ctrs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("prefix CTRs must be strictly increasing".into()));
    }
    let mut sum = Rational::zero();
    let ads = ctrs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            sum += p;
            let bid = Rational::from_integer((i + 1).into()) / &sum;
            Ad::new((i + 1).to_string(), "q1", p.clone(), bid, 1)
        })
        .collect();
    Ok(ProblemInstance::new(1, ads, queries(1), Mechanism::All))
}

/// Which property [`random_instance`] builds in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Enforce {
    E1,
    E2,
}

impl FromStr for Enforce {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "E1" | "e1" => Ok(Enforce::E1),
            "E2" | "e2" => Ok(Enforce::E2),
            other => Err(Error::InvalidArgument(format!("unknown property `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomSpec {
    pub seed: u64,
    pub queries: usize,
    pub ads_per_query: RangeInclusive<usize>,
    pub buckets: usize,
    pub mechanism: Mechanism,
    pub bids: Vec<Rational>,
    pub ctrs: Vec<Rational>,
    pub enforce: Option<Enforce>,
}

impl RandomSpec {
    /// Default grids: bids `{1, 3/2, 2, 3, 4}` (all reachable by a threshold)
    /// and CTRs in tenths.
    pub fn new(seed: u64, queries: usize, buckets: usize, mechanism: Mechanism) -> Self {
        RandomSpec {
            seed,
            queries,
            ads_per_query: 1..=3,
            buckets,
            mechanism,
            bids: alloc::vec![int(1), ratio(3, 2), int(2), int(3), int(4)],
            ctrs: (0..=10).map(|i| ratio(i, 10)).collect(),
            enforce: None,
        }
    }

    /// A small instance shape drawn from `seed` itself: 1 to 3 buckets, 1 to 4
    /// queries, 1 to 3 ads per query.
    pub fn small(seed: u64, mechanism: Mechanism) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
        let buckets = rng.gen_range(1..=3);
        let queries = rng.gen_range(1..=4);
        RandomSpec::new(seed, queries, buckets, mechanism)
    }

    pub fn enforcing(mut self, property: Enforce) -> Self {
        self.enforce = Some(property);
        self
    }

    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.queries == 0 || self.buckets == 0 {
            return bad("random spec needs at least one query and one bucket");
        }
        if *self.ads_per_query.start() == 0 || self.ads_per_query.is_empty() {
            return bad("ads per query must be a nonempty range of positive counts");
        }
        if self.bids.is_empty() || self.ctrs.is_empty() {
            return bad("bid and CTR grids must be nonempty");
        }
        if self.bids.iter().any(|b| *b <= Rational::zero()) {
            return bad("bids must be positive");
        }
        if !self.ctrs.iter().all(is_probability) {
            return bad("CTR grid values must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Splits `members` into pairs whose weighted mean is `mean`, leaving an odd
/// one out at `mean`. `weight[i]` is the weight of `members[i]`.
fn balanced_ctrs(rng: &mut ChaCha8Rng, mean: &Rational, weights: &[Rational]) -> Vec<Rational> {
    let half = ratio(1, 2);
    let room = mean.clone().min(Rational::one() - mean);
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.shuffle(rng);
    let mut out = alloc::vec![mean.clone(); weights.len()];
    for pair in order.chunks_exact(2) {
        let (i, j) = (pair[0], pair[1]);
        let d = match rng.gen_range(0..3) {
            0 => Rational::zero(),
            1 => &room * &half,
            _ => room.clone(),
        };
        let total = &weights[i] + &weights[j];
        out[i] = mean + &d * &weights[j] / &total;
        out[j] = mean - &d * &weights[i] / &total;
    }
    out
}

/// A deterministic instance drawn from `spec`. With `enforce`, CTRs are built
/// around a per-bucket mean so the property holds exactly: under E1 every
/// `(query, bucket, bid)` cell averages to its bucket mean, under E2 every
/// `(bucket, bid)` cell does once weighted by query probability.
pub fn random_instance(spec: &RandomSpec) -> Result<ProblemInstance> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let raw: Vec<i64> = (0..spec.queries).map(|_| rng.gen_range(1..=4)).collect();
    let total: i64 = raw.iter().sum();
    let probs: Vec<Rational> = raw.iter().map(|&w| ratio(w, total)).collect();
    let names: Vec<String> = (1..=spec.queries).map(|i| format!("q{i}")).collect();

    let mut shape: Vec<(usize, Rational, usize)> = Vec::new();
    for q in 0..spec.queries {
        let n = rng.gen_range(spec.ads_per_query.clone());
        for _ in 0..n {
            let bid = spec.bids.choose(&mut rng).expect("nonempty grid").clone();
            shape.push((q, bid, rng.gen_range(1..=spec.buckets)));
        }
    }

    let mut ctrs: Vec<Rational> = Vec::with_capacity(shape.len());
    match spec.enforce {
        None => {
            for _ in &shape {
                ctrs.push(spec.ctrs.choose(&mut rng).expect("nonempty grid").clone());
            }
        }
        Some(property) => {
            let means: Vec<Rational> = (0..spec.buckets)
                .map(|_| spec.ctrs.choose(&mut rng).expect("nonempty grid").clone())
                .collect();
            ctrs = alloc::vec![Rational::zero(); shape.len()];
            let mut done = alloc::vec![false; shape.len()];
            for i in 0..shape.len() {
                if done[i] {
                    continue;
                }
                let (q, ref bid, z) = shape[i];
                let cell: Vec<usize> = (i..shape.len())
                    .filter(|&j| {
                        let (qj, ref bj, zj) = shape[j];
                        zj == z && bj == bid && (property == Enforce::E2 || qj == q)
                    })
                    .collect();
                let weights: Vec<Rational> = cell.iter().map(|&j| probs[shape[j].0].clone()).collect();
                let values = balanced_ctrs(&mut rng, &means[z - 1], &weights);
                for (&j, v) in cell.iter().zip(values) {
                    ctrs[j] = v;
                    done[j] = true;
                }
            }
        }
    }

    let ads = shape
        .into_iter()
        .zip(ctrs)
        .enumerate()
        .map(|(i, ((q, bid, z), p))| Ad::new(format!("a{}", i + 1), names[q].as_str(), p, bid, z))
        .collect();
    let queries = QueryDistribution::new(names.iter().zip(probs).map(|(n, p)| (n.as_str().into(), p)).collect());
    ProblemInstance::checked(spec.buckets, ads, queries, spec.mechanism)
}
