//! Nonnegative extended reals `[0, +inf]`, the codomain of every density.
//!
//! `+inf` absorbs under addition and positive scaling; finite values are
//! always `>= 0` and never NaN.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum ExtValue {
    Finite(f64),
    Infinite,
}

pub use ExtValue::{Finite, Infinite};

impl ExtValue {
    /// Wrap a finite value. Panics on NaN or negative input: those are
    /// programming errors, not data.
    pub fn finite(v: f64) -> ExtValue {
        assert!(!v.is_nan(), "ExtValue cannot hold NaN");
        assert!(v >= 0.0, "ExtValue must be nonnegative, got {v}");
        if v.is_infinite() {
            Infinite
        } else {
            Finite(v)
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Finite(_))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Infinite)
    }

    /// Finite payload, if any.
    pub fn value(&self) -> Option<f64> {
        match self {
            Finite(v) => Some(*v),
            Infinite => None,
        }
    }

    /// Collapse to `f64`, mapping `+inf` to `f64::INFINITY`.
    pub fn to_f64(&self) -> f64 {
        match self {
            Finite(v) => *v,
            Infinite => f64::INFINITY,
        }
    }

    pub fn add(&self, o: &ExtValue) -> ExtValue {
        match (self, o) {
            (Finite(a), Finite(b)) => ExtValue::finite(a + b),
            _ => Infinite,
        }
    }

    /// Scale by a nonnegative real; `lambda * inf = inf` for `lambda > 0`
    /// and `0 * inf = 0` (the convention used by cell sums with zero weight,
    /// which never occur but keep the algebra total).
    pub fn scale(&self, lambda: f64) -> ExtValue {
        assert!(lambda >= 0.0 && !lambda.is_nan(), "scale must be >= 0");
        match self {
            Finite(v) => ExtValue::finite(lambda * v),
            Infinite => {
                if lambda == 0.0 {
                    Finite(0.0)
                } else {
                    Infinite
                }
            }
        }
    }
}

impl PartialEq for ExtValue {
    fn eq(&self, other: &Self) -> bool {
        matches!(self.cmp(other), Ordering::Equal)
    }
}

impl Eq for ExtValue {}

impl PartialOrd for ExtValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Finite(a), Finite(b)) => a.total_cmp(b),
            (Finite(_), Infinite) => Ordering::Less,
            (Infinite, Finite(_)) => Ordering::Greater,
            (Infinite, Infinite) => Ordering::Equal,
        }
    }
}

impl fmt::Display for ExtValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finite(v) => write!(f, "{v}"),
            Infinite => write!(f, "inf"),
        }
    }
}
