//! Exact-arithmetic model of bucketed CTR prediction maps in ad-auction selection.
//!
//! An instance is a finite set of queries with a probability distribution and a
//! finite set of ads `(p, b, z, q)`: true click probability, bid, raw prediction
//! bucket and the single query the ad is eligible for. A prediction map `f`
//! assigns a probability to every bucket; ads are scored by `b * f(z)` and
//! selected either by showing every ad that clears a unit cost threshold
//! ([`Mechanism::All`]) or by showing a single top-scoring ad per query
//! ([`Mechanism::One`]).
//!
//! Everything in the computational path is an exact [`Rational`]. Calibration,
//! fixed points, score ties and cycles are all decided by exact equality.
//!
//! The crate is `no_std` and only needs `alloc`. File formats and the CLI live in
//! the companion `auction-calib` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod calibrate;
pub mod empirical;
mod error;
pub mod generators;
pub mod metrics;
pub mod model;
pub mod optimize;
pub mod properties;
pub mod rational;
pub mod selection;

pub use error::{Error, Result};
pub use model::{
    candidates, validate, Ad, AdId, Mechanism, PredictionMap, ProblemInstance, QueryDistribution, QueryId, Violation,
};
pub use rational::Rational;
