//! Finite-sample recalibration: serve sampled queries, count clicks, refit.
//!
//! All randomness comes from `ChaCha8Rng` (the `rand_chacha` crate) seeded with
//! `seed_from_u64`, so a seed reproduces the same log on every platform.
//! Probabilities with denominators that fit in a `u64` are sampled exactly by
//! drawing a uniform integer below the denominator; larger ones fall back to an
//! `f64` comparison.

use alloc::vec::Vec;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{AdId, PredictionMap, ProblemInstance, QueryId};
use crate::rational::to_f64;
use crate::selection::show_distribution;
use crate::{Error, Rational, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClickRecord {
    pub query: QueryId,
    pub ad: AdId,
    pub bucket: usize,
    pub clicked: bool,
}

/// One served batch: every impression in serving order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClickLog {
    /// The map the batch was served with.
    pub map: PredictionMap,
    pub n_queries: usize,
    pub seed: u64,
    pub records: Vec<ClickRecord>,
}

impl ClickLog {
    /// `(clicks, impressions)` on `bucket`.
    pub fn counts(&self, bucket: usize) -> (u64, u64) {
        self.records
            .iter()
            .filter(|r| r.bucket == bucket)
            .fold((0, 0), |(c, n), r| (c + u64::from(r.clicked), n + 1))
    }
}

/// Draws `true` with probability `p`.
fn bernoulli(rng: &mut ChaCha8Rng, p: &Rational) -> bool {
    match (p.numer().to_u64(), p.denom().to_u64()) {
        (Some(n), Some(d)) => rng.gen_range(0..d) < n,
        _ => rng.gen::<f64>() < to_f64(p),
    }
}

/// Samples query indices from a distribution.
enum QuerySampler {
    Exact { total: u64, cumulative: Vec<u64> },
    Approx { cumulative: Vec<f64> },
}

impl QuerySampler {
    fn new(probs: &[Rational]) -> Self {
        let lcm = probs.iter().fold(BigInt::one(), |l, p| l.lcm(p.denom()));
        let scaled: Option<Vec<u64>> = probs
            .iter()
            .map(|p| (p.numer() * (&lcm / p.denom())).to_u64())
            .collect();
        if let (Some(total), Some(weights)) = (lcm.to_u64(), scaled) {
            let cumulative = weights
                .iter()
                .scan(0u64, |acc, w| {
                    *acc += w;
                    Some(*acc)
                })
                .collect();
            return QuerySampler::Exact { total, cumulative };
        }
        let cumulative = probs
            .iter()
            .scan(0.0, |acc, p| {
                *acc += to_f64(p);
                Some(*acc)
            })
            .collect();
        QuerySampler::Approx { cumulative }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        match self {
            QuerySampler::Exact { total, cumulative } => {
                let u = rng.gen_range(0..*total);
                cumulative.partition_point(|&c| c <= u)
            }
            QuerySampler::Approx { cumulative } => {
                let u = rng.gen::<f64>() * cumulative.last().copied().unwrap_or(1.0);
                cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
            }
        }
    }
}

fn serve(instance: &ProblemInstance, rng: &mut ChaCha8Rng, i: usize) -> ClickRecord {
    let ad = &instance.ads()[i];
    ClickRecord {
        query: ad.query.clone(),
        ad: ad.id.clone(),
        bucket: ad.bucket,
        clicked: bernoulli(rng, &ad.ctr),
    }
}

/// Serves `n_queries` sampled queries with `f`. Under `ONE`, tied winners are
/// broken uniformly at random; under `ALL` every ad above threshold shows.
pub fn simulate_batch(instance: &ProblemInstance, f: &PredictionMap, n_queries: usize, seed: u64) -> Result<ClickLog> {
    if n_queries == 0 {
        return Err(Error::InvalidArgument("a batch needs at least one query".into()));
    }
    let shown = show_distribution(instance, f)?;
    let one = instance.mechanism() == crate::Mechanism::One;
    let served: Vec<Vec<usize>> = instance
        .ads_by_query()
        .into_iter()
        .map(|ads| ads.into_iter().filter(|&i| !shown.conditional[i].is_zero()).collect())
        .collect();
    let probs: Vec<Rational> = instance.queries().entries().iter().map(|(_, p)| p.clone()).collect();
    let sampler = QuerySampler::new(&probs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for _ in 0..n_queries {
        let q = sampler.sample(&mut rng);
        let ads = &served[q];
        if ads.is_empty() {
            continue;
        }
        if one {
            let pick = ads[rng.gen_range(0..ads.len())];
            records.push(serve(instance, &mut rng, pick));
        } else {
            for &i in ads {
                records.push(serve(instance, &mut rng, i));
            }
        }
    }
    Ok(ClickLog {
        map: f.clone(),
        n_queries,
        seed,
        records,
    })
}

/// `clicks / impressions` on every bucket with impressions; `f(z)` elsewhere.
pub fn empirical_t(f: &PredictionMap, log: &ClickLog) -> Result<PredictionMap> {
    if let Some(r) = log.records.iter().find(|r| r.bucket == 0 || r.bucket > f.len()) {
        return Err(Error::InvalidArgument(alloc::format!(
            "log record in bucket {} for a map over {} buckets",
            r.bucket,
            f.len()
        )));
    }
    let mut clicks = alloc::vec![0u64; f.len()];
    let mut impressions = alloc::vec![0u64; f.len()];
    for r in &log.records {
        clicks[r.bucket - 1] += u64::from(r.clicked);
        impressions[r.bucket - 1] += 1;
    }
    let values = (0..f.len())
        .map(|z| match impressions[z] {
            0 => f.values()[z].clone(),
            n => Rational::new(clicks[z].into(), n.into()),
        })
        .collect();
    Ok(PredictionMap::from_trusted(values))
}

/// `f0, f1, ..., f_batches`, where batch `t` is served with `f_t` using seed
/// `seed + t` (wrapping) and `f_{t+1}` is its empirical recalibration.
pub fn run_loop(
    instance: &ProblemInstance,
    f0: &PredictionMap,
    batches: usize,
    n_queries: usize,
    seed: u64,
) -> Result<Vec<PredictionMap>> {
    if batches == 0 {
        return Err(Error::InvalidArgument("the loop needs at least one batch".into()));
    }
    let mut maps = alloc::vec![f0.clone()];
    for t in 0..batches {
        let last = maps.last().expect("nonempty");
        let log = simulate_batch(instance, last, n_queries, seed.wrapping_add(t as u64))?;
        let next = empirical_t(last, &log)?;
        maps.push(next);
    }
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{paper_fixture, Fixture};
    use crate::rational::{int, ratio};
    use alloc::vec;

    fn quarter() -> PredictionMap {
        PredictionMap::new(vec![ratio(1, 4)]).unwrap()
    }

    #[test]
    fn zero_map_serves_nothing() {
        let inst = paper_fixture(&Fixture::OneNoFixedPoint);
        let log = simulate_batch(&inst, &PredictionMap::zeros(2), 1000, 3).unwrap();
        assert!(log.records.is_empty());
        assert_eq!(empirical_t(&log.map, &log).unwrap(), PredictionMap::zeros(2));
    }

    #[test]
    fn same_seed_same_log() {
        let inst = paper_fixture(&Fixture::OneNoFixedPoint);
        let f = PredictionMap::new(vec![ratio(1, 2), ratio(1, 2)]).unwrap();
        assert_eq!(
            simulate_batch(&inst, &f, 500, 9).unwrap(),
            simulate_batch(&inst, &f, 500, 9).unwrap()
        );
        assert_ne!(
            simulate_batch(&inst, &f, 500, 9).unwrap(),
            simulate_batch(&inst, &f, 500, 10).unwrap()
        );
    }

    #[test]
    fn empirical_t_is_a_count_ratio() {
        let records = (0..100)
            .map(|i| ClickRecord {
                query: "q1".into(),
                ad: "a".into(),
                bucket: 2,
                clicked: i < 40,
            })
            .collect();
        let f = PredictionMap::new(vec![ratio(1, 3), ratio(1, 3)]).unwrap();
        let log = ClickLog {
            map: f.clone(),
            n_queries: 100,
            seed: 0,
            records,
        };
        assert_eq!(log.counts(2), (40, 100));
        assert_eq!(empirical_t(&f, &log).unwrap().values(), &[ratio(1, 3), ratio(2, 5)]);
    }

    #[test]
    fn fig1_impressions_cover_every_ad() {
        let inst = paper_fixture(&Fixture::Fig1ManyFixedPoints);
        let log = simulate_batch(&inst, &quarter(), 1000, 1).unwrap();
        assert_eq!(log.records.len(), 4000);
    }

    #[test]
    fn one_tie_breaks_roughly_evenly() {
        // q3 of the no-fixed-point fixture ties C and D at equal map values.
        let inst = paper_fixture(&Fixture::OneNoFixedPoint);
        let f = PredictionMap::new(vec![ratio(1, 2), ratio(1, 2)]).unwrap();
        let log = simulate_batch(&inst, &f, 40_000, 5).unwrap();
        let count = |id: &str| log.records.iter().filter(|r| r.ad.0 == id).count() as f64;
        let (c, d) = (count("C"), count("D"));
        // 10_000 q3 queries expected, split evenly: sd of C is 50.
        assert!((c - d).abs() < 6.0 * 100.0, "{c} vs {d}");
        assert!((c + d - 10_000.0).abs() < 6.0 * 87.0);
    }

    #[test]
    fn loop_cycles_near_the_exact_values() {
        let inst = paper_fixture(&Fixture::AllNoFixedPoint);
        let maps = run_loop(&inst, &PredictionMap::new(vec![ratio(1, 2)]).unwrap(), 4, 20_000, 11).unwrap();
        assert_eq!(maps.len(), 5);
        let v: Vec<f64> = maps.iter().map(|m| to_f64(m.get(1))).collect();
        assert!(
            (v[1] - 0.4).abs() < 0.02 && (v[2] - 0.7).abs() < 0.02 && (v[3] - 0.4).abs() < 0.02,
            "{v:?}"
        );
    }

    #[test]
    fn tiny_batches_run() {
        let inst = paper_fixture(&Fixture::AllNoFixedPoint);
        assert!(run_loop(&inst, &PredictionMap::new(vec![int(1)]).unwrap(), 3, 1, 0).is_ok());
        assert!(run_loop(&inst, &PredictionMap::new(vec![int(1)]).unwrap(), 0, 1, 0).is_err());
        assert!(simulate_batch(&inst, &quarter(), 0, 0).is_err());
    }

    #[test]
    fn huge_denominators_fall_back_to_floating_point() {
        let big = Rational::new(BigInt::from(1u8), BigInt::from(u64::MAX) * BigInt::from(3u8));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(!(0..100).any(|_| bernoulli(&mut rng, &big)));
        let sampler = QuerySampler::new(&[big.clone(), Rational::one() - big]);
        assert!(matches!(sampler, QuerySampler::Approx { .. }));
        assert!((0..100).all(|_| sampler.sample(&mut rng) == 1));
    }
}
