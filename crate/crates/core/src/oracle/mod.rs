//! Ground truth: quadratic brute-force solvers and exact binomial tails.
//! The [`events`] submodule measures the concentration events behind the
//! grouped algorithms.

pub mod events;

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::instance::Instance;

/// Lexicographically first `(i, j)` with `⟨X[i], Y[j]⟩ = 0`.
pub fn brute_force_ov(inst: &Instance) -> Option<(usize, usize)> {
    let ys = &inst.ys;
    inst.xs.par_iter().enumerate().find_map_first(|(i, x)| {
        ys.iter().position(|y| x.dot(y) == 0).map(|j| (i, j))
    })
}

/// Lexicographically first `(i, j)` achieving the minimum Hamming distance.
pub fn brute_force_cp(inst: &Instance) -> Result<(usize, usize, u32)> {
    if inst.xs.is_empty() || inst.ys.is_empty() {
        return Err(Error::param("closest pair needs at least one vector per side"));
    }
    let ys = &inst.ys;
    let (dist, i, j) = inst
        .xs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let (j, dist) = ys
                .iter()
                .enumerate()
                .map(|(j, y)| (j, x.hamming(y)))
                .min_by_key(|&(j, dist)| (dist, j))
                .expect("Y is nonempty");
            (dist, i, j)
        })
        .min()
        .expect("X is nonempty");
    Ok((i, j, dist))
}

/// `Pr[Binomial(d, 1/2) ≤ T]` as an exact fraction over `2^d`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TailValue {
    pub numerator: BigUint,
    pub denominator: BigUint,
}

impl TailValue {
    /// `value ≥ n^{−a/b}`, decided exactly as `num^b · n^a ≥ den^b`.
    pub fn at_least_inverse_power(&self, n: u64, a: u32, b: u32) -> bool {
        self.numerator.pow(b) * BigUint::from(n).pow(a) >= self.denominator.pow(b)
    }

    pub fn to_f64(&self) -> f64 {
        let shift = self.denominator.bits().saturating_sub(60);
        let num = (&self.numerator >> shift).to_f64().unwrap_or(f64::INFINITY);
        let den = (&self.denominator >> shift).to_f64().unwrap_or(f64::INFINITY);
        num / den
    }
}

impl fmt::Display for TailValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

/// Running sums `Σ_{k ≤ T} C(d, k)` for `T = 0..=d`.
pub(crate) fn cumulative_binomials(d: usize) -> Vec<BigUint> {
    let mut out = Vec::with_capacity(d + 1);
    let mut term = BigUint::one();
    let mut acc = BigUint::zero();
    for k in 0..=d {
        acc += &term;
        out.push(acc.clone());
        term = term * BigUint::from(d - k) / BigUint::from(k + 1);
    }
    out
}

/// `Σ_{k=0}^{T} C(d, k) / 2^d`; `T > d` is clamped to `d`.
pub fn binomial_tail(d: usize, t: usize) -> TailValue {
    let sums = cumulative_binomials(d);
    TailValue {
        numerator: sums[t.min(d)].clone(),
        denominator: BigUint::one() << d,
    }
}
