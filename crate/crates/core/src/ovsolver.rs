//! Average-case Orthogonal Vectors: regime dispatch, grouped scoring with
//! `Q(z) = (D·z − M)^q`, and brute force on every cell whose score reaches
//! `Q(0) = M^q`.
//!
//! An orthogonal pair `(x, y_j)` with `x` in group `i` contributes exactly
//! `M^q` to `A[i][j]`, and every other term is nonnegative, so the threshold
//! test never misses it. Whenever the grouped pipeline runs on the full input
//! its verdict is exact.

use std::time::Instant;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitvec::BitVector;
use crate::error::{Error, Result};
use crate::instance::{dimension_ratio, stream_rng, Instance, ProblemKind, Stream};
use crate::polyeval::{partition, ScoreEngine, Threshold};
use crate::solver::{plan_for, FoundPair, PlanSummary, SolveReport, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `p < √(1/c)`: many orthogonal pairs expected; a small sample suffices.
    Subsample,
    /// `√(1/c) ≤ p ≤ 3√(1/c)`.
    Critical,
    /// `p > 3√(1/c)`: no orthogonal pair with high probability.
    TrivialNo,
}

// Keeps the closed band inclusive when p was itself computed as √(1/c).
const BAND_TOLERANCE: f64 = 1e-12;

pub fn regime(n: usize, d: usize, p: f64) -> Result<Regime> {
    if n < 2 {
        return Err(Error::param("regime needs n ≥ 2 (c = d / log₂ n)"));
    }
    let c = dimension_ratio(n, d);
    let lower = (1.0 / c).sqrt();
    let upper = 3.0 * lower;
    Ok(if p < lower * (1.0 - BAND_TOLERANCE) {
        Regime::Subsample
    } else if p > upper * (1.0 + BAND_TOLERANCE) {
        Regime::TrivialNo
    } else {
        Regime::Critical
    })
}

fn clamp_even(x: f64) -> u32 {
    let even = 2.0 * (x / 2.0).round();
    if even.is_finite() && even > 2.0 {
        even as u32
    } else {
        2
    }
}

/// Default `(q, s)`: `q = log₂ n / (50 log₂ c)` rounded to an even integer
/// `≥ 2`, and `s = n^{log₂ log₂ c / log₂ c}` for `c > 2` (else 1), both with
/// unit constants.
pub fn default_params(n: usize, d: usize) -> Result<(u32, usize)> {
    if n < 2 {
        return Err(Error::param("default parameters need n ≥ 2"));
    }
    let c = dimension_ratio(n, d);
    if c <= 1.0 {
        return Err(Error::param(format!("c = {c:.4} ≤ 1; default q and s are undefined")));
    }
    let log_n = (n as f64).log2();
    let q = clamp_even(log_n / (50.0 * c.log2()));
    let s = if c > 2.0 {
        let exponent = c.log2().log2() / c.log2();
        ((n as f64).powf(exponent).round() as usize).clamp(1, n)
    } else {
        1
    };
    Ok((q, s))
}

/// Lexicographically first orthogonal pair among all cells at or above the
/// threshold, as `(x index, j)`.
fn scan_cells(
    cells: &[(usize, usize)],
    groups: &[&[BitVector]],
    group_size: usize,
    ys: &[BitVector],
) -> Option<(usize, usize)> {
    cells
        .par_iter()
        .filter_map(|&(g, j)| {
            groups[g]
                .iter()
                .position(|x| x.dot(&ys[j]) == 0)
                .map(|w| (g * group_size + w, j))
        })
        .min()
}

fn grouped_pipeline(inst: &Instance, cfg: &SolverConfig, report: &mut SolveReport) -> Result<()> {
    let params = report.params;
    let plan = plan_for(inst, &params)?;
    let groups = partition(&inst.xs, params.s);

    let started = Instant::now();
    let engine = ScoreEngine::new(cfg.evaluator, &inst.ys, inst.d(), &plan, cfg.subset_limit)?;
    let threshold = Threshold::new(plan.center_power());
    let mut failing = Vec::new();
    engine.for_each_tile(&groups, cfg.tile_cells, |offset, tile| {
        failing.extend(tile.collect_at_least(&threshold, offset));
        Ok(())
    })?;
    report.score_evaluations += 1;
    report.timing.eval += started.elapsed();

    let started = Instant::now();
    let hit = scan_cells(&failing, &groups, params.s, &inst.ys);
    report.timing.fallback += started.elapsed();

    report.groups = groups.len();
    report.cells = (groups.len() * inst.n()) as u64;
    report.n_failing_pairs = failing.len() as u64;
    report.cell_scans += failing.len() as u64;
    report.plan = Some(PlanSummary::new(&plan, inst.d()));
    report.found = hit.map(|(i, j)| found_pair(inst, i, j));
    Ok(())
}

fn found_pair(inst: &Instance, i: usize, j: usize) -> FoundPair {
    FoundPair {
        i,
        j,
        value: inst.xs[i].dot(&inst.ys[j]),
        x: inst.xs[i].clone(),
        y: inst.ys[j].clone(),
    }
}

fn subsample_scan(inst: &Instance, exponent: f64) -> Option<(usize, usize)> {
    let n = inst.n();
    let k = ((n as f64).powf(exponent).ceil() as usize).clamp(1, n);
    let pick = |side: u64| {
        let mut rng = stream_rng(inst.params.seed, Stream::Subsample, side);
        let mut idx = sample(&mut rng, n, k).into_vec();
        idx.sort_unstable();
        idx
    };
    let (xi, yj) = (pick(0), pick(1));
    xi.par_iter()
        .find_map_first(|&i| {
            yj.iter()
                .find(|&&j| inst.xs[i].dot(&inst.ys[j]) == 0)
                .map(|&j| (i, j))
        })
}

pub fn solve_ov(inst: &Instance, cfg: &SolverConfig) -> Result<SolveReport> {
    inst.expect_kind(ProblemKind::Ov)?;
    let params = cfg.resolve(inst)?;
    let started = Instant::now();
    let mut report = SolveReport::empty(ProblemKind::Ov, params, cfg);

    cfg.install(|| -> Result<()> {
        let regime = if inst.n() < 2 {
            Regime::Critical
        } else {
            regime(inst.n(), inst.d(), inst.params.p)?
        };
        report.regime = Some(regime);
        match regime {
            Regime::Critical => grouped_pipeline(inst, cfg, &mut report),
            Regime::TrivialNo if !cfg.strict => Ok(()),
            Regime::TrivialNo => grouped_pipeline(inst, cfg, &mut report),
            Regime::Subsample => {
                let t = Instant::now();
                let hit = subsample_scan(inst, cfg.subsample_exponent);
                report.timing.fallback += t.elapsed();
                match hit {
                    Some((i, j)) => {
                        report.found = Some(found_pair(inst, i, j));
                        Ok(())
                    }
                    None => {
                        report.fallback_used = true;
                        grouped_pipeline(inst, cfg, &mut report)
                    }
                }
            }
        }
    })??;

    report.timing.total = started.elapsed();
    if let Some(f) = &report.found {
        debug_assert_eq!(f.x.dot(&f.y), 0);
    }
    Ok(report)
}
