//! Scaled score polynomial `Q(z) = (D·z − M)^q` and exact group scores.
//!
//! Two evaluators produce the same [`GroupScores`]:
//!
//! * [`direct_group_scores`] sums `Q(⟨x, y⟩)` with one popcount per pair.
//! * [`monomial_group_scores`] expands `Q(⟨x, y⟩)` into multilinear subset
//!   monomials `x_S · y_S` and evaluates all cells as a feature-matrix product
//!   `L · R`, the batch-evaluation route.
//!
//! Over Boolean inputs `⟨x, y⟩^t = Σ_m surj(t, m) · Σ_{|S| = m} x_S y_S`, where
//! `surj(t, m)` counts maps from a `t`-set onto an `m`-set. Only diagonal
//! monomials `x_S y_S` appear, so one weight per subset size suffices.
//!
//! All arithmetic is exact. Each evaluator first runs on `i128` with checked
//! operations and restarts on arbitrary-precision integers if anything
//! overflows.

use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitvec::BitVector;
use crate::error::{Error, Result};

/// Default cap on `Σ_{m ≤ q} C(d, m)` for the monomial evaluator.
pub const DEFAULT_SUBSET_LIMIT: u64 = 1 << 21;

/// Cells per score tile in the solvers.
pub const DEFAULT_TILE_CELLS: usize = 1 << 21;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScorePlan {
    /// Even degree `q ≥ 2`.
    pub degree: u32,
    /// Scaled center `M ≈ D·μ`.
    pub center: BigInt,
    /// Scale denominator `D`.
    pub scale: u64,
    /// `w_0 ..= w_q`, indexed by subset size.
    pub weights: Vec<BigInt>,
}

impl ScorePlan {
    /// `Q(z) = (D·z − M)^q`.
    pub fn eval(&self, z: i64) -> BigInt {
        evaluate_q(self, z)
    }

    /// `Q(0) = M^q`, the score of an orthogonal pair.
    pub fn center_power(&self) -> BigInt {
        self.center.pow(self.degree)
    }

    /// Largest bit length among the multilinear weights.
    pub fn coefficient_bits(&self) -> u64 {
        self.weights.iter().map(|w| w.bits()).max().unwrap_or(0)
    }
}

/// Builds the plan for center `μ = mu_num / mu_den`, rounding `D·μ` half away
/// from zero.
pub fn make_plan(mu_num: &BigInt, mu_den: &BigInt, degree: u32, scale: u64) -> Result<ScorePlan> {
    if degree < 2 || !degree.is_multiple_of(2) {
        return Err(Error::param(format!("degree q = {degree} must be even and at least 2")));
    }
    if !mu_den.is_positive() {
        return Err(Error::param("center denominator must be positive"));
    }
    if mu_num.is_negative() {
        return Err(Error::param("center must be nonnegative"));
    }
    if scale == 0 {
        return Err(Error::param("scale denominator D must be positive"));
    }
    let two = BigInt::from(2);
    let center = (&two * BigInt::from(scale) * mu_num + mu_den) / (&two * mu_den);
    let weights = monomial_weights(degree, &center, scale);
    Ok(ScorePlan {
        degree,
        center,
        scale,
        weights,
    })
}

/// Number of maps from a `t`-set onto an `m`-set, `m! · S(t, m)`.
pub fn surjection_count(t: u32, m: u32) -> BigUint {
    if m > t {
        return BigUint::zero();
    }
    // surj(t, m) = m · (surj(t−1, m) + surj(t−1, m−1)), rolling over t.
    let m = m as usize;
    let mut row = vec![BigUint::zero(); m + 1];
    row[0] = BigUint::one();
    for _ in 0..t {
        for k in (1..=m).rev() {
            let sum = &row[k] + &row[k - 1];
            row[k] = sum * BigUint::from(k);
        }
        row[0] = BigUint::zero();
    }
    row.swap_remove(m)
}

/// `w_m = Σ_{t=m}^{q} C(q, t) · D^t · (−M)^{q−t} · surj(t, m)`.
pub fn monomial_weights(degree: u32, center: &BigInt, scale: u64) -> Vec<BigInt> {
    let q = degree;
    let neg_center = -center;
    let d = BigInt::from(scale);
    (0..=q)
        .map(|m| {
            (m..=q)
                .map(|t| {
                    let surj = BigInt::from_biguint(Sign::Plus, surjection_count(t, m));
                    binomial(q as u64, t as u64) * d.pow(t) * neg_center.pow(q - t) * surj
                })
                .sum()
        })
        .collect()
}

/// `(D·z − M)^q`, exact.
pub fn evaluate_q(plan: &ScorePlan, z: i64) -> BigInt {
    (BigInt::from(plan.scale) * BigInt::from(z) - &plan.center).pow(plan.degree)
}

pub(crate) fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

// ---------------------------------------------------------------------------
// Monomial budget
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonomialBudget {
    pub q: u32,
    pub d: usize,
    /// `Σ_{m ≤ q} C(d, m)`: subsets the diagonal expansion needs.
    pub subset_count: u128,
    /// `Σ_{ℓ ≤ q} C(2d, ℓ)`: generic multilinear count over `2d` variables.
    pub generic_bound: u128,
}

impl fmt::Display for MonomialBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "q={} d={} subsets={} generic_bound={}",
            self.q, self.d, self.subset_count, self.generic_bound
        )
    }
}

fn binomial_prefix_sum(n: usize, q: u32) -> u128 {
    (0..=q as u64)
        .map(|m| binomial(n as u64, m).to_u128().unwrap_or(u128::MAX))
        .fold(0u128, |a, b| a.saturating_add(b))
}

pub fn monomial_budget(q: u32, d: usize) -> MonomialBudget {
    MonomialBudget {
        q,
        d,
        subset_count: binomial_prefix_sum(d, q),
        generic_bound: binomial_prefix_sum(2 * d, q),
    }
}

// ---------------------------------------------------------------------------
// Exact score storage
// ---------------------------------------------------------------------------

/// Row-major cell values, `i128` when everything fit.
#[derive(Clone, Debug)]
pub enum ScoreValues {
    Wide(Vec<i128>),
    Big(Vec<BigInt>),
}

/// A threshold usable against either representation.
#[derive(Clone, Debug)]
pub struct Threshold {
    big: BigInt,
    wide: Option<i128>,
}

impl Threshold {
    pub fn new(value: BigInt) -> Self {
        Threshold {
            wide: value.to_i128(),
            big: value,
        }
    }

    pub fn value(&self) -> &BigInt {
        &self.big
    }
}

#[derive(Clone, Debug)]
pub struct GroupScores {
    pub rows: usize,
    pub cols: usize,
    pub values: ScoreValues,
    pub plan: ScorePlan,
    pub group_sizes: Vec<usize>,
}

impl GroupScores {
    pub fn get(&self, i: usize, j: usize) -> BigInt {
        let k = i * self.cols + j;
        match &self.values {
            ScoreValues::Wide(v) => BigInt::from(v[k]),
            ScoreValues::Big(v) => v[k].clone(),
        }
    }

    /// `A[i][j] ≥ threshold`.
    #[inline]
    pub fn at_least(&self, i: usize, j: usize, threshold: &Threshold) -> bool {
        let k = i * self.cols + j;
        match &self.values {
            ScoreValues::Wide(v) => match threshold.wide {
                Some(t) => v[k] >= t,
                None => threshold.big.is_negative(),
            },
            ScoreValues::Big(v) => v[k] >= threshold.big,
        }
    }

    /// Cells at or above `threshold`, in row-major order.
    pub fn cells_at_least<'a>(
        &'a self,
        threshold: &'a Threshold,
    ) -> impl Iterator<Item = (usize, usize)> + 'a {
        (0..self.rows)
            .flat_map(move |i| (0..self.cols).map(move |j| (i, j)))
            .filter(move |&(i, j)| self.at_least(i, j, threshold))
    }

    /// Cells at or above `threshold` as `(row_offset + i, j)`, row-major.
    pub fn collect_at_least(&self, threshold: &Threshold, row_offset: usize) -> Vec<(usize, usize)> {
        (0..self.rows)
            .into_par_iter()
            .flat_map_iter(|i| {
                (0..self.cols)
                    .filter(move |&j| self.at_least(i, j, threshold))
                    .map(move |j| (row_offset + i, j))
            })
            .collect()
    }

    pub fn count_at_least(&self, threshold: &Threshold) -> u64 {
        (0..self.rows)
            .into_par_iter()
            .map(|i| {
                (0..self.cols)
                    .filter(|&j| self.at_least(i, j, threshold))
                    .count() as u64
            })
            .sum()
    }

    pub fn is_wide(&self) -> bool {
        matches!(self.values, ScoreValues::Wide(_))
    }
}

/// Cell-wise equality of the values, regardless of representation.
impl PartialEq for GroupScores {
    fn eq(&self, other: &Self) -> bool {
        if self.rows != other.rows || self.cols != other.cols || self.group_sizes != other.group_sizes {
            return false;
        }
        match (&self.values, &other.values) {
            (ScoreValues::Wide(a), ScoreValues::Wide(b)) => a == b,
            (ScoreValues::Big(a), ScoreValues::Big(b)) => a == b,
            _ => (0..self.rows)
                .all(|i| (0..self.cols).all(|j| self.get(i, j) == other.get(i, j))),
        }
    }
}

trait Exact: Clone + Send + Sync + Sized {
    fn exact_zero() -> Self;
    fn from_big(v: &BigInt) -> Option<Self>;
    fn add(&self, other: &Self) -> Option<Self>;
    fn mul_u64(&self, c: u64) -> Option<Self>;
}

impl Exact for i128 {
    fn exact_zero() -> Self {
        0
    }
    fn from_big(v: &BigInt) -> Option<Self> {
        v.to_i128()
    }
    #[inline]
    fn add(&self, other: &Self) -> Option<Self> {
        self.checked_add(*other)
    }
    #[inline]
    fn mul_u64(&self, c: u64) -> Option<Self> {
        self.checked_mul(c as i128)
    }
}

impl Exact for BigInt {
    fn exact_zero() -> Self {
        Zero::zero()
    }
    fn from_big(v: &BigInt) -> Option<Self> {
        Some(v.clone())
    }
    fn add(&self, other: &Self) -> Option<Self> {
        Some(self + other)
    }
    fn mul_u64(&self, c: u64) -> Option<Self> {
        Some(self * c)
    }
}

/// Runs `f` on `i128`, retrying on `BigInt` after any overflow.
fn with_escalation(
    wide: impl FnOnce() -> Option<Vec<i128>>,
    big: impl FnOnce() -> Vec<BigInt>,
) -> ScoreValues {
    match wide() {
        Some(v) => ScoreValues::Wide(v),
        None => ScoreValues::Big(big()),
    }
}

fn check_dims(groups: &[&[BitVector]], ys: &[BitVector]) -> Result<usize> {
    let dim = groups
        .iter()
        .flat_map(|g| g.iter())
        .chain(ys)
        .map(BitVector::len)
        .next()
        .unwrap_or(0);
    if groups.iter().flat_map(|g| g.iter()).chain(ys).any(|v| v.len() != dim) {
        return Err(Error::param("all vectors must share one dimension"));
    }
    Ok(dim)
}

// ---------------------------------------------------------------------------
// Direct evaluator
// ---------------------------------------------------------------------------

fn direct_rows<T: Exact>(groups: &[&[BitVector]], ys: &[BitVector], table: &[BigInt]) -> Option<Vec<T>> {
    let table: Vec<T> = table.iter().map(T::from_big).collect::<Option<_>>()?;
    let rows: Vec<Option<Vec<T>>> = groups
        .par_iter()
        .map(|group| {
            ys.iter()
                .map(|y| {
                    group
                        .iter()
                        .try_fold(T::exact_zero(), |acc, x| acc.add(&table[x.dot(y) as usize]))
                })
                .collect()
        })
        .collect();
    rows.into_iter()
        .collect::<Option<Vec<_>>>()
        .map(|r| r.into_iter().flatten().collect())
}

/// `A[i][j] = Σ_{x ∈ group i} Q(⟨x, y_j⟩)` by popcount.
pub fn direct_group_scores(
    groups: &[&[BitVector]],
    ys: &[BitVector],
    plan: &ScorePlan,
) -> Result<GroupScores> {
    let dim = check_dims(groups, ys)?;
    ScoreEngine::new(Evaluator::Direct, ys, dim, plan, u64::MAX)?.scores(groups)
}

// ---------------------------------------------------------------------------
// Monomial (feature-map) evaluator
// ---------------------------------------------------------------------------

/// Column layout for subsets of `[dim]` with size `≤ q`: sizes ascending,
/// colexicographic within a size. A sorted subset `c_1 < … < c_m` lands at
/// `offset[m] + Σ_i C(c_i, i)`.
pub struct SubsetIndex {
    q: usize,
    offsets: Vec<u64>,
    // binom[a][b] = C(a, b) for a < dim, b ≤ q
    binom: Vec<Vec<u64>>,
}

impl SubsetIndex {
    pub fn new(dim: usize, q: u32) -> Self {
        let q = q as usize;
        let binom: Vec<Vec<u64>> = (0..dim.max(1))
            .map(|a| {
                (0..=q)
                    .map(|b| binomial(a as u64, b as u64).to_u64().unwrap_or(u64::MAX))
                    .collect()
            })
            .collect();
        let mut offsets = vec![0u64; q + 2];
        for m in 0..=q {
            let count = binomial(dim as u64, m as u64).to_u64().unwrap_or(u64::MAX);
            offsets[m + 1] = offsets[m].saturating_add(count);
        }
        SubsetIndex { q, offsets, binom }
    }

    pub fn len(&self) -> u64 {
        self.offsets[self.q + 1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of a sorted subset.
    pub fn index_of(&self, subset: &[usize]) -> u64 {
        let rank: u64 = subset
            .iter()
            .enumerate()
            .map(|(i, &c)| self.binom[c][i + 1])
            .sum();
        self.offsets[subset.len()] + rank
    }

    /// Calls `f(size, index)` for every subset of `support` (sorted) with size
    /// `≤ q`, sizes ascending.
    pub fn for_each_subset(&self, support: &[usize], mut f: impl FnMut(usize, u64)) {
        for size in 0..=self.q.min(support.len()) {
            self.walk(support, 0, size, 0, 0, &mut f);
        }
    }

    fn walk(
        &self,
        support: &[usize],
        from: usize,
        size: usize,
        depth: usize,
        rank: u64,
        f: &mut impl FnMut(usize, u64),
    ) {
        if depth == size {
            f(size, self.offsets[size] + rank);
            return;
        }
        let remaining = size - depth;
        for k in from..=support.len() - remaining {
            let c = support[k];
            self.walk(support, k + 1, size, depth + 1, rank + self.binom[c][depth + 1], f);
        }
    }
}

/// Right features in compressed-column form: for each `y_j`, the indices of
/// subsets `S ⊆ supp(y_j)` grouped by `|S|`.
struct RightFeatures {
    cols: Vec<(Vec<u32>, Vec<usize>)>,
}

impl RightFeatures {
    fn build(ys: &[BitVector], index: &SubsetIndex) -> Self {
        let q = index.q;
        let cols = ys
            .par_iter()
            .map(|y| {
                let support: Vec<usize> = y.iter_ones().collect();
                let mut idx = Vec::new();
                let mut bounds = vec![0usize; q + 2];
                index.for_each_subset(&support, |size, k| {
                    idx.push(k as u32);
                    bounds[size + 1] = idx.len();
                });
                for m in 1..bounds.len() {
                    bounds[m] = bounds[m].max(bounds[m - 1]);
                }
                (idx, bounds)
            })
            .collect();
        RightFeatures { cols }
    }
}

fn monomial_rows<T: Exact>(
    groups: &[&[BitVector]],
    right: &RightFeatures,
    index: &SubsetIndex,
    weights: &[BigInt],
) -> Option<Vec<T>> {
    let weights: Vec<T> = weights.iter().map(T::from_big).collect::<Option<_>>()?;
    let q = index.q;
    let width = index.len() as usize;
    let rows: Vec<Option<Vec<T>>> = groups
        .par_iter()
        .map_init(
            || vec![0u32; width],
            |counts, group| {
                // Left features for this group: counts[S] = #{x in group : x_S = 1};
                // L[i, S] = w_|S| · counts[S].
                let mut touched = Vec::new();
                for x in group.iter() {
                    let support: Vec<usize> = x.iter_ones().collect();
                    index.for_each_subset(&support, |_, k| {
                        let c = &mut counts[k as usize];
                        if *c == 0 {
                            touched.push(k as usize);
                        }
                        *c += 1;
                    });
                }
                let row = right
                    .cols
                    .iter()
                    .map(|(idx, bounds)| {
                        let mut acc = T::exact_zero();
                        for m in 0..=q {
                            let by_size: u64 = idx[bounds[m]..bounds[m + 1]]
                                .iter()
                                .map(|&k| counts[k as usize] as u64)
                                .sum();
                            if by_size != 0 {
                                acc = acc.add(&weights[m].mul_u64(by_size)?)?;
                            }
                        }
                        Some(acc)
                    })
                    .collect::<Option<Vec<T>>>();
                for k in touched {
                    counts[k] = 0;
                }
                row
            },
        )
        .collect();
    rows.into_iter()
        .collect::<Option<Vec<_>>>()
        .map(|r| r.into_iter().flatten().collect())
}

/// Same cells as [`direct_group_scores`], computed as `L · R` over subset
/// monomials. Fails with a capacity error when the subset count exceeds
/// `subset_limit`.
pub fn monomial_group_scores(
    groups: &[&[BitVector]],
    ys: &[BitVector],
    plan: &ScorePlan,
    subset_limit: u64,
) -> Result<GroupScores> {
    let dim = check_dims(groups, ys)?;
    ScoreEngine::new(Evaluator::Monomial, ys, dim, plan, subset_limit)?.scores(groups)
}

enum EngineState {
    Direct { table: Vec<BigInt> },
    Monomial { index: SubsetIndex, right: RightFeatures },
}

/// Evaluator state for a fixed `Y` side and plan, reusable across any number
/// of group tiles. The `Q` table or the right features are built once.
pub struct ScoreEngine<'a> {
    ys: &'a [BitVector],
    dim: usize,
    plan: &'a ScorePlan,
    state: EngineState,
}

impl<'a> ScoreEngine<'a> {
    pub fn new(
        evaluator: Evaluator,
        ys: &'a [BitVector],
        dim: usize,
        plan: &'a ScorePlan,
        subset_limit: u64,
    ) -> Result<Self> {
        if plan.degree < 2 || !plan.degree.is_multiple_of(2) {
            return Err(Error::param(format!("degree q = {} must be even and at least 2", plan.degree)));
        }
        if ys.iter().any(|y| y.len() != dim) {
            return Err(Error::param("all vectors must share one dimension"));
        }
        let state = match evaluator {
            Evaluator::Direct => EngineState::Direct {
                table: (0..=dim as i64).map(|z| plan.eval(z)).collect(),
            },
            Evaluator::Monomial => {
                let budget = monomial_budget(plan.degree, dim);
                if budget.subset_count > subset_limit as u128 || budget.subset_count > u32::MAX as u128 {
                    return Err(Error::Capacity {
                        budget,
                        limit: subset_limit,
                    });
                }
                let index = SubsetIndex::new(dim, plan.degree);
                let right = RightFeatures::build(ys, &index);
                EngineState::Monomial { index, right }
            }
        };
        Ok(ScoreEngine { ys, dim, plan, state })
    }

    /// Scores of `groups` against every `y`.
    pub fn scores(&self, groups: &[&[BitVector]]) -> Result<GroupScores> {
        if groups.iter().flat_map(|g| g.iter()).any(|x| x.len() != self.dim) {
            return Err(Error::param("all vectors must share one dimension"));
        }
        let values = match &self.state {
            EngineState::Direct { table } => with_escalation(
                || direct_rows::<i128>(groups, self.ys, table),
                || direct_rows::<BigInt>(groups, self.ys, table).expect("BigInt never overflows"),
            ),
            EngineState::Monomial { index, right } => {
                let w = &self.plan.weights;
                with_escalation(
                    || monomial_rows::<i128>(groups, right, index, w),
                    || monomial_rows::<BigInt>(groups, right, index, w).expect("BigInt never overflows"),
                )
            }
        };
        Ok(GroupScores {
            rows: groups.len(),
            cols: self.ys.len(),
            values,
            plan: self.plan.clone(),
            group_sizes: groups.iter().map(|g| g.len()).collect(),
        })
    }

    /// Scores consecutive tiles of at most `tile_cells` cells (at least one
    /// row each), calling `f(first_group, tile)` in order. Memory stays
    /// bounded by one tile regardless of `n`.
    pub fn for_each_tile(
        &self,
        groups: &[&[BitVector]],
        tile_cells: usize,
        mut f: impl FnMut(usize, &GroupScores) -> Result<()>,
    ) -> Result<()> {
        let rows = (tile_cells / self.ys.len().max(1)).max(1);
        for (t, tile) in groups.chunks(rows).enumerate() {
            f(t * rows, &self.scores(tile)?)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Evaluator {
    #[default]
    Direct,
    Monomial,
}

impl fmt::Display for Evaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Evaluator::Direct => "direct",
            Evaluator::Monomial => "monomial",
        })
    }
}

impl std::str::FromStr for Evaluator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Evaluator::Direct),
            "monomial" => Ok(Evaluator::Monomial),
            other => Err(Error::param(format!("unknown evaluator `{other}`"))),
        }
    }
}

pub fn group_scores(
    evaluator: Evaluator,
    groups: &[&[BitVector]],
    ys: &[BitVector],
    plan: &ScorePlan,
    subset_limit: u64,
) -> Result<GroupScores> {
    match evaluator {
        Evaluator::Direct => direct_group_scores(groups, ys, plan),
        Evaluator::Monomial => monomial_group_scores(groups, ys, plan, subset_limit),
    }
}

/// Consecutive groups of `size` vectors; the last may be shorter.
pub fn partition(xs: &[BitVector], size: usize) -> Vec<&[BitVector]> {
    xs.chunks(size.max(1)).collect()
}
