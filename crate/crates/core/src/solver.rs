//! Configuration and reporting shared by the OV and CP pipelines.

use std::time::Duration;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::bitvec::BitVector;
use crate::error::{Error, Result};
use crate::instance::{Instance, ProblemKind};
use crate::ovsolver::{default_params, Regime};
use crate::polyeval::{self, make_plan, monomial_budget, Evaluator, ScorePlan};

pub const DEFAULT_OV_SCALE: u64 = 1000;
pub const DEFAULT_CP_SCALE: u64 = 2;
pub const DEFAULT_SUBSAMPLE_EXPONENT: f64 = 0.55;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Even degree; `None` picks the default heuristic.
    pub q: Option<u32>,
    /// Group size; `None` picks the default heuristic.
    pub s: Option<usize>,
    /// Scale denominator `D`; `None` uses 1000 (OV) or 2 (CP).
    pub scale: Option<u64>,
    pub evaluator: Evaluator,
    /// Run the full pipeline even when the OV regime says "no pair w.h.p.".
    pub strict: bool,
    /// Worker threads; `None` uses available parallelism.
    pub threads: Option<usize>,
    /// Side sample size is `⌈n^exponent⌉` in the subsample regime.
    pub subsample_exponent: f64,
    /// Capacity limit for the monomial evaluator, in subsets.
    pub subset_limit: u64,
    /// Score cells held in memory at once.
    pub tile_cells: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            q: None,
            s: None,
            scale: None,
            evaluator: Evaluator::Direct,
            strict: true,
            threads: None,
            subsample_exponent: DEFAULT_SUBSAMPLE_EXPONENT,
            subset_limit: polyeval::DEFAULT_SUBSET_LIMIT,
            tile_cells: polyeval::DEFAULT_TILE_CELLS,
        }
    }
}

impl SolverConfig {
    pub fn with_q(mut self, q: u32) -> Self {
        self.q = Some(q);
        self
    }

    pub fn with_s(mut self, s: usize) -> Self {
        self.s = Some(s);
        self
    }

    pub fn with_evaluator(mut self, evaluator: Evaluator) -> Self {
        self.evaluator = evaluator;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }

    /// Fills in `q`, `s` and `D` for a concrete instance.
    pub fn resolve(&self, inst: &Instance) -> Result<EffectiveParams> {
        let n = inst.n();
        let (auto_q, auto_s) = default_params(n, inst.d()).unwrap_or((2, 1));
        let q = self.q.unwrap_or(auto_q);
        if q < 2 || !q.is_multiple_of(2) {
            return Err(Error::param(format!("q = {q} must be even and at least 2")));
        }
        let s = self.s.unwrap_or(auto_s);
        if s == 0 {
            return Err(Error::param("group size s must be at least 1"));
        }
        let scale = self.scale.unwrap_or(match inst.kind() {
            ProblemKind::Ov => DEFAULT_OV_SCALE,
            ProblemKind::Cp => DEFAULT_CP_SCALE,
        });
        if scale == 0 {
            return Err(Error::param("scale denominator must be positive"));
        }
        Ok(EffectiveParams {
            q,
            s: s.min(n),
            scale,
        })
    }

    pub(crate) fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(t) = self.threads {
            if t == 0 {
                return Err(Error::param("threads must be at least 1"));
            }
            builder = builder.num_threads(t);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::param(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub q: u32,
    pub s: usize,
    pub scale: u64,
}

/// The score plan for an instance: center `p²d` (OV, with `p` taken as its
/// exact decimal) or `d/2` (CP).
pub fn plan_for(inst: &Instance, params: &EffectiveParams) -> Result<ScorePlan> {
    let d = BigInt::from(inst.d());
    let (num, den) = match inst.kind() {
        ProblemKind::Ov => {
            let (a, b) = inst.params.p_ratio();
            let (a, b) = (BigInt::from(a), BigInt::from(b));
            (&a * &a * d, &b * &b)
        }
        ProblemKind::Cp => (d, BigInt::from(2)),
    };
    make_plan(&num, &den, params.q, params.scale)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoundPair {
    pub i: usize,
    pub j: usize,
    /// Inner product (OV) or Hamming distance (CP).
    pub value: u32,
    pub x: BitVector,
    pub y: BitVector,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub q: u32,
    /// `M`, decimal.
    pub center: String,
    pub scale: u64,
    pub subset_count: u128,
    pub coefficient_bits: u64,
}

impl PlanSummary {
    pub fn new(plan: &ScorePlan, dim: usize) -> Self {
        PlanSummary {
            q: plan.degree,
            center: plan.center.to_string(),
            scale: plan.scale,
            subset_count: monomial_budget(plan.degree, dim).subset_count,
            coefficient_bits: plan.coefficient_bits(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub eval: Duration,
    pub fallback: Duration,
    pub total: Duration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub kind: ProblemKind,
    pub found: Option<FoundPair>,
    /// OV only.
    pub regime: Option<Regime>,
    pub params: EffectiveParams,
    pub evaluator: Evaluator,
    pub strict: bool,
    pub groups: usize,
    /// `groups · n`, the number of score cells.
    pub cells: u64,
    /// Cells at or above the brute-force threshold (the last threshold tried for CP).
    pub n_failing_pairs: u64,
    /// Brute-force cell scans, summed over all CP distance levels.
    pub cell_scans: u64,
    pub fallback_used: bool,
    /// Number of group-score passes; at most one per solve.
    pub score_evaluations: u32,
    pub plan: Option<PlanSummary>,
    /// CP candidate distance bound `T*`.
    pub distance_bound: Option<u32>,
    pub timing: Timing,
    pub exact: bool,
}

impl SolveReport {
    pub(crate) fn empty(kind: ProblemKind, params: EffectiveParams, cfg: &SolverConfig) -> Self {
        SolveReport {
            kind,
            found: None,
            regime: None,
            params,
            evaluator: cfg.evaluator,
            strict: cfg.strict,
            groups: 0,
            cells: 0,
            n_failing_pairs: 0,
            cell_scans: 0,
            fallback_used: false,
            score_evaluations: 0,
            plan: None,
            distance_bound: None,
            timing: Timing::default(),
            exact: true,
        }
    }

    /// Fraction of score cells that were brute-forced.
    pub fn failing_fraction(&self) -> f64 {
        if self.cells == 0 {
            0.0
        } else {
            self.n_failing_pairs as f64 / self.cells as f64
        }
    }
}
