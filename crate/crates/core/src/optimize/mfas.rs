//! Minimum feedback arc set on tournaments and its reduction to `ONE`.
//!
//! Each pair of players becomes an equally likely query with two bid-1 ads: the
//! winner's (CTR 1, in the winner's bucket) and the loser's (CTR 0, in the
//! loser's bucket). Ordering buckets by `f` is a ranking, and a query earns
//! value exactly when its winner is ranked above its loser. So the optimal
//! expected value is `1 - upsets / pairs` for the best ranking.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Ad, Mechanism, ProblemInstance, QueryDistribution};
use crate::rational::int;
use crate::{Error, Rational, Result};

/// Largest tournament [`mfas_exact`] accepts; the solver is `O(2^n n)`.
pub const MAX_MFAS_PLAYERS: usize = 20;

/// A complete tournament on players `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Tournament {
    players: usize,
    beats: Vec<bool>,
}

impl Tournament {
    /// Builds a tournament from `beats(i, j)` for every `i < j` (1-based).
    pub fn from_fn(players: usize, mut beats: impl FnMut(usize, usize) -> bool) -> Self {
        let mut t = Tournament {
            players,
            beats: alloc::vec![false; players * players],
        };
        for i in 1..=players {
            for j in i + 1..=players {
                let (w, l) = if beats(i, j) { (i, j) } else { (j, i) };
                t.beats[(w - 1) * players + (l - 1)] = true;
            }
        }
        t
    }

    /// From `(winner, loser)` results; every pair must appear exactly once.
    pub fn from_results(players: usize, results: &[(usize, usize)]) -> Result<Self> {
        let mut t = Tournament {
            players,
            beats: alloc::vec![false; players * players],
        };
        for &(w, l) in results {
            if w == 0 || l == 0 || w > players || l > players || w == l {
                return Err(Error::InvalidArgument(format!("bad result {w}>{l}")));
            }
            if t.beats(w, l) || t.beats(l, w) {
                return Err(Error::InvalidArgument(format!("pair {w},{l} played twice")));
            }
            t.beats[(w - 1) * players + (l - 1)] = true;
        }
        if results.len() != t.pairs() {
            return Err(Error::InvalidArgument(format!(
                "{} results for {} pairs",
                results.len(),
                t.pairs()
            )));
        }
        Ok(t)
    }

    /// Lower-numbered players beat higher-numbered ones.
    pub fn transitive(players: usize) -> Self {
        Self::from_fn(players, |_, _| true)
    }

    /// Every pair decided by a fair coin from a ChaCha8 stream seeded with `seed`.
    pub fn random(players: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_fn(players, |_, _| rng.gen::<bool>())
    }

    pub fn players(&self) -> usize {
        self.players
    }

    pub fn pairs(&self) -> usize {
        self.players * self.players.saturating_sub(1) / 2
    }

    pub fn beats(&self, i: usize, j: usize) -> bool {
        self.beats[(i - 1) * self.players + (j - 1)]
    }

    /// `(winner, loser)` for every pair `i < j`, in order.
    pub fn results(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.pairs());
        for i in 1..=self.players {
            for j in i + 1..=self.players {
                out.push(if self.beats(i, j) { (i, j) } else { (j, i) });
            }
        }
        out
    }
}

/// A ranking of players, best first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ranking {
    order: Vec<usize>,
    rank: Vec<usize>,
}

impl Ranking {
    /// `order` lists players from rank 1 downwards and must be a permutation of
    /// `1..=n`.
    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut rank = alloc::vec![0; n];
        for (pos, &p) in order.iter().enumerate() {
            if p == 0 || p > n || rank[p - 1] != 0 {
                return Err(Error::InvalidArgument(format!("{order:?} is not a permutation")));
            }
            rank[p - 1] = pos + 1;
        }
        Ok(Ranking { order, rank })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn rank(&self, player: usize) -> usize {
        self.rank[player - 1]
    }
}

/// Pairs whose loser is ranked above their winner.
pub fn upsets(t: &Tournament, r: &Ranking) -> usize {
    t.results().into_iter().filter(|&(w, l)| r.rank(l) < r.rank(w)).count()
}

/// Minimum number of upsets over all rankings, with a ranking attaining it.
///
/// Dynamic program over the set of players already placed at the top: adding
/// player `p` just below them costs one upset per placed player that `p` beats.
/// Ties between choices go to the lowest-numbered player.
pub fn mfas_exact(t: &Tournament) -> Result<(usize, Ranking)> {
    let n = t.players();
    if n > MAX_MFAS_PLAYERS {
        return Err(Error::TooLarge {
            what: "tournament players",
            size: n,
            max: MAX_MFAS_PLAYERS,
        });
    }
    let beaten: Vec<u32> = (1..=n)
        .map(|p| {
            (1..=n)
                .filter(|&q| q != p && t.beats(p, q))
                .fold(0u32, |m, q| m | 1 << (q - 1))
        })
        .collect();
    let full = (1usize << n) - 1;
    let mut cost = alloc::vec![u32::MAX; full + 1];
    let mut last = alloc::vec![0u8; full + 1];
    cost[0] = 0;
    for mask in 0..full {
        if cost[mask] == u32::MAX {
            continue;
        }
        for (p, beaten_by_p) in beaten.iter().enumerate() {
            if mask & (1 << p) != 0 {
                continue;
            }
            let next = mask | 1 << p;
            let c = cost[mask] + (beaten_by_p & mask as u32).count_ones();
            if c < cost[next] {
                cost[next] = c;
                last[next] = p as u8;
            }
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut mask = full;
    while mask != 0 {
        let p = last[mask] as usize;
        order.push(p + 1);
        mask &= !(1 << p);
    }
    order.reverse();
    Ok((cost[full] as usize, Ranking::from_order(order)?))
}

/// The `ONE` instance whose optimal expected value is `1 - mfas / pairs`.
pub fn mfas_to_instance(t: &Tournament) -> Result<ProblemInstance> {
    let n = t.players();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "the reduction needs at least 2 players, got {n}"
        )));
    }
    let mut names = Vec::with_capacity(t.pairs());
    let mut ads = Vec::with_capacity(2 * t.pairs());
    for i in 1..=n {
        for j in i + 1..=n {
            let q = format!("m{i}-{j}");
            let (w, l) = if t.beats(i, j) { (i, j) } else { (j, i) };
            ads.push(Ad::new(format!("{q}-w"), q.as_str(), int(1), int(1), w));
            ads.push(Ad::new(format!("{q}-l"), q.as_str(), int(0), int(1), l));
            names.push(q);
        }
    }
    let share = Rational::new(1.into(), names.len().into());
    let queries = QueryDistribution::new(names.into_iter().map(|q| (q.into(), share.clone())).collect());
    Ok(ProblemInstance::new(n, ads, queries, Mechanism::One))
}
