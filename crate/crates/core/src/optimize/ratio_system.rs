//! Feasibility of systems `x[a] >= r * x[b]` (strict or not) over positive reals.
//!
//! Taking logs turns each constraint into a difference constraint, so the
//! system is solvable iff the constraint graph has no negative cycle. We stay
//! multiplicative to keep everything exact: a path weight is the product of
//! its edge multipliers together with the number of strict edges on it, and
//! paths are compared lexicographically (smaller product first, then more
//! strict edges). Strict inequalities are thus handled symbolically, as if
//! every strict edge carried an extra factor `delta` slightly below one.

use alloc::vec::Vec;

use num_traits::{One, Zero};

use crate::Rational;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct PathWeight {
    product: Rational,
    strict: u32,
}

impl PathWeight {
    fn unit() -> Self {
        PathWeight {
            product: Rational::one(),
            strict: 0,
        }
    }

    fn extend(&self, edge: &Edge) -> Self {
        PathWeight {
            product: &self.product * &edge.multiplier,
            strict: self.strict + u32::from(edge.strict),
        }
    }

    fn less_than(&self, other: &Self) -> bool {
        self.product < other.product || (self.product == other.product && self.strict > other.strict)
    }
}

/// `x[to] <= multiplier * x[from]`, strictly when `strict` is set.
#[derive(Debug, Clone)]
struct Edge {
    from: usize,
    to: usize,
    multiplier: Rational,
    strict: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct RatioSystem {
    nodes: usize,
    edges: Vec<Edge>,
}

impl RatioSystem {
    pub fn new(nodes: usize) -> Self {
        RatioSystem {
            nodes,
            edges: Vec::new(),
        }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn truncate(&mut self, edges: usize) {
        self.edges.truncate(edges);
    }

    /// `x[a] >= ratio * x[b]`, or `>` when `strict`. `ratio` must be positive.
    pub fn at_least(&mut self, a: usize, b: usize, ratio: &Rational, strict: bool) {
        debug_assert!(*ratio > Rational::zero());
        self.edges.push(Edge {
            from: a,
            to: b,
            multiplier: ratio.recip(),
            strict,
        });
    }

    /// `x[a] == ratio * x[b]`.
    pub fn equal(&mut self, a: usize, b: usize, ratio: &Rational) {
        self.at_least(a, b, ratio, false);
        self.at_least(b, a, &ratio.recip(), false);
    }

    /// Shortest-path potentials starting from all-unit weights.
    pub fn potentials(&self) -> Option<Vec<PathWeight>> {
        self.potentials_from(alloc::vec![PathWeight::unit(); self.nodes])
    }

    /// Bellman-Ford from arbitrary starting potentials. Any potentials that were
    /// stable for a subset of the current edges make a good warm start.
    /// Returns `None` iff the system is infeasible.
    pub fn potentials_from(&self, mut dist: Vec<PathWeight>) -> Option<Vec<PathWeight>> {
        debug_assert_eq!(dist.len(), self.nodes);
        for _ in 0..=self.nodes {
            let mut changed = false;
            for e in &self.edges {
                let candidate = dist[e.from].extend(e);
                if candidate.less_than(&dist[e.to]) {
                    dist[e.to] = candidate;
                    changed = true;
                }
            }
            if !changed {
                return Some(dist);
            }
        }
        None
    }

    /// Concrete positive values satisfying every constraint, from stable
    /// potentials. Each node gets `product * delta^strict`, with `delta < 1`
    /// close enough to one that no non-tight inequality flips.
    pub fn witness(&self, potentials: &[PathWeight]) -> Vec<Rational> {
        let half = Rational::new(1.into(), 2.into());
        let mut gap = half;
        for e in &self.edges {
            let (u, v) = (&potentials[e.from], &potentials[e.to]);
            let bound = &u.product * &e.multiplier;
            let steps = i64::from(u.strict) + i64::from(e.strict) - i64::from(v.strict);
            if v.product < bound && steps > 0 {
                let rho = &v.product / &bound;
                let allowed = (Rational::one() - rho) / Rational::from_integer(steps.into());
                if allowed < gap {
                    gap = allowed;
                }
            }
        }
        let delta = Rational::one() - gap;
        let values: Vec<Rational> = potentials
            .iter()
            .map(|p| &p.product * num_traits::pow(delta.clone(), p.strict as usize))
            .collect();
        debug_assert!(self.satisfied_by(&values));
        values
    }

    pub fn solve(&self) -> Option<Vec<Rational>> {
        self.potentials().map(|p| self.witness(&p))
    }

    pub fn satisfied_by(&self, x: &[Rational]) -> bool {
        self.edges.iter().all(|e| {
            let bound = &e.multiplier * &x[e.from];
            if e.strict {
                x[e.to] < bound
            } else {
                x[e.to] <= bound
            }
        })
    }
}
