use alloc::vec::Vec;

use num_traits::{One, Zero};

use crate::model::{Mechanism, PredictionMap, ProblemInstance};
use crate::{Error, Rational, Result};

/// Ads of one bucket sharing an exact bid. Under threshold selection they are
/// always shown or hidden together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BidGroup {
    pub bid: Rational,
    pub ads: Vec<usize>,
}

/// Bid groups of `bucket`, highest bid first.
pub fn bid_groups(instance: &ProblemInstance, bucket: usize) -> Vec<BidGroup> {
    let mut groups: Vec<BidGroup> = Vec::new();
    for (i, ad) in instance.ads().iter().enumerate() {
        if ad.bucket != bucket {
            continue;
        }
        match groups.iter_mut().find(|g| g.bid == ad.bid) {
            Some(g) => g.ads.push(i),
            None => groups.push(BidGroup {
                bid: ad.bid.clone(),
                ads: alloc::vec![i],
            }),
        }
    }
    groups.sort_by(|a, b| b.bid.cmp(&a.bid));
    groups
}

/// Number of leading groups that any `f(z) <= 1` can reach: those with bid >= 1.
pub fn reachable_prefixes(groups: &[BidGroup]) -> usize {
    groups.iter().take_while(|g| g.bid >= Rational::one()).count()
}

/// The map value that shows exactly the first `len` groups (`0` for none).
pub fn prefix_threshold(groups: &[BidGroup], len: usize) -> Rational {
    if len == 0 {
        Rational::zero()
    } else {
        groups[len - 1].bid.recip()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllOptimum {
    pub map: PredictionMap,
    pub ev: Rational,
    /// Number of bid groups shown in each bucket.
    pub shown_groups: Vec<usize>,
}

/// Efficiency-maximizing map under threshold selection.
///
/// Buckets are independent: each one shows a bid-descending prefix of its bid
/// groups, and the prefix with the largest `sum Pr^Q(q_i) (p_i b_i - 1)` wins.
/// On equal value the shorter prefix is kept.
pub fn optimal_map_all(instance: &ProblemInstance) -> Result<AllOptimum> {
    if instance.mechanism() != Mechanism::All {
        return Err(Error::WrongMechanism {
            expected: Mechanism::All,
        });
    }
    let mut map = PredictionMap::zeros(instance.buckets());
    let mut ev = Rational::zero();
    let mut shown_groups = Vec::with_capacity(instance.buckets());
    for z in 1..=instance.buckets() {
        let groups = bid_groups(instance, z);
        let mut running = Rational::zero();
        let (mut best, mut best_len) = (Rational::zero(), 0);
        for (len, group) in groups.iter().take(reachable_prefixes(&groups)).enumerate() {
            for &i in &group.ads {
                let ad = &instance.ads()[i];
                running += instance.query_probability(i) * (ad.value() - Rational::one());
            }
            if running > best {
                best = running.clone();
                best_len = len + 1;
            }
        }
        map.set(z, prefix_threshold(&groups, best_len));
        ev += best;
        shown_groups.push(best_len);
    }
    Ok(AllOptimum { map, ev, shown_groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{paper_fixture, random_instance, Fixture, RandomSpec};
    use crate::metrics::expected_value;
    use crate::model::{Ad, QueryDistribution};
    use crate::rational::{int, ratio};
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn three_class_shows_a_and_b() {
        let inst = paper_fixture(&Fixture::AllThreeClass(10));
        let opt = optimal_map_all(&inst).unwrap();
        assert_eq!(opt.map.values(), &[ratio(10, 19)]);
        assert_eq!(opt.ev, int(9));
        assert_eq!(opt.shown_groups, vec![2]);
    }

    #[test]
    fn fig1_shows_everything() {
        let inst = paper_fixture(&Fixture::Fig1ManyFixedPoints);
        let opt = optimal_map_all(&inst).unwrap();
        assert_eq!(opt.map.values(), &[ratio(1, 4)]);
        assert_eq!(opt.ev, ratio(43, 30));
    }

    #[test]
    fn losing_single_ad_is_hidden() {
        let inst = ProblemInstance::new(
            1,
            vec![Ad::new("a", "q", ratio(1, 2), int(1), 1)],
            QueryDistribution::uniform(1, |_| "q".into()),
            Mechanism::All,
        );
        let opt = optimal_map_all(&inst).unwrap();
        assert_eq!(opt.map.values(), &[int(0)]);
        assert_eq!(opt.ev, int(0));
    }

    #[test]
    fn rejects_one_mechanism() {
        let inst = paper_fixture(&Fixture::OneNoFixedPoint);
        assert!(matches!(optimal_map_all(&inst), Err(Error::WrongMechanism { .. })));
    }

    #[test]
    fn sub_unit_bids_are_unreachable() {
        // p b - 1 > 0 would need b >= 1/p, but b = 1/2 needs f = 2.
        let inst = ProblemInstance::new(
            1,
            vec![Ad::new("a", "q", int(1), ratio(1, 2), 1)],
            QueryDistribution::uniform(1, |_| "q".into()),
            Mechanism::All,
        );
        assert_eq!(optimal_map_all(&inst).unwrap().map.values(), &[int(0)]);
    }

    fn sampled_maps(k: usize, seed: u64) -> Vec<PredictionMap> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..1000)
            .map(|_| PredictionMap::new((0..k).map(|_| ratio(rng.gen_range(0..=60), 60)).collect()).unwrap())
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn optimum_dominates_sampled_maps(seed in 0u64..200) {
            let inst = random_instance(&RandomSpec::small(seed, Mechanism::All)).unwrap();
            let opt = optimal_map_all(&inst).unwrap();
            prop_assert_eq!(expected_value(&inst, &opt.map).unwrap(), opt.ev.clone());
            for f in sampled_maps(inst.buckets(), seed) {
                prop_assert!(expected_value(&inst, &f).unwrap() <= opt.ev);
            }
        }

        #[test]
        fn optimum_matches_exhaustive_threshold_search(seed in 0u64..200) {
            // Joint search over every map built from per-bucket thresholds 1/b (and 0),
            // scored with the generic EV rather than per-bucket prefix sums.
            let inst = random_instance(&RandomSpec::small(seed, Mechanism::All)).unwrap();
            let options: Vec<Vec<Rational>> = (1..=inst.buckets())
                .map(|z| {
                    let mut v = vec![Rational::zero()];
                    for ad in inst.ads().iter().filter(|a| a.bucket == z && a.bid >= Rational::one()) {
                        v.push(ad.bid.recip());
                    }
                    v
                })
                .collect();
            let mut best: Option<Rational> = None;
            let mut idx = vec![0usize; options.len()];
            loop {
                let f = PredictionMap::new(idx.iter().zip(&options).map(|(&i, o)| o[i].clone()).collect()).unwrap();
                let ev = expected_value(&inst, &f).unwrap();
                if best.as_ref().is_none_or(|b| ev > *b) {
                    best = Some(ev);
                }
                let mut pos = 0;
                while pos < idx.len() {
                    idx[pos] += 1;
                    if idx[pos] < options[pos].len() { break; }
                    idx[pos] = 0;
                    pos += 1;
                }
                if pos == idx.len() { break; }
            }
            prop_assert_eq!(best.unwrap(), optimal_map_all(&inst).unwrap().ev);
        }

        #[test]
        fn optimum_never_splits_a_bid_group(seed in 0u64..200) {
            let inst = random_instance(&RandomSpec::small(seed, Mechanism::All)).unwrap();
            let opt = optimal_map_all(&inst).unwrap();
            let shown = crate::selection::show_distribution(&inst, &opt.map).unwrap();
            for z in 1..=inst.buckets() {
                let groups = bid_groups(&inst, z);
                for (g, group) in groups.iter().enumerate() {
                    let expected = g < opt.shown_groups[z - 1];
                    for &i in &group.ads {
                        prop_assert_eq!(shown.conditional[i].is_one(), expected);
                    }
                }
            }
        }
    }
}
