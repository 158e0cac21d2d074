//! Empirical measurement of the concentration events that bound how often a
//! (group, y) cell reaches the brute-force threshold.
//!
//! OV events for a sampled group `X_i` and vector `y_j` (logs base 2):
//!
//! * E1: `‖y_j‖₁ ∈ pd ± 0.1·c^{1/4}·log n`
//! * E2: every `x ∈ X_i` has `⟨x, y_j⟩ ∈ p²d ± 0.2·log n`
//! * E3: for every `α` with `c^{−1/4} ≤ |α| ≤ 0.2`,
//!   `n_α ≤ log n · (1 + s·n^{−ε α²})`, where `n_α` counts group members at
//!   inner product `p²d + α·log n`.
//!
//! CP variant (inner products are Hamming distances): E1 is undefined; E2 asks
//! for every distance in `[T_δ₂, d − T_δ₂]`; E3 uses
//! `α = (v/d − 1/2)·√c` over `|α| ≤ δ₂·√c`.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpsolver::distance_threshold;
use crate::error::{Error, Result};
use crate::instance::{stream_rng, Instance, ProblemKind, Stream};
use crate::polyeval::{partition, Evaluator, ScoreEngine, Threshold};
use crate::solver::{plan_for, SolverConfig};

pub const DEFAULT_OV_EPSILON: f64 = 1.0 / 10_000.0;
pub const DEFAULT_CP_EPSILON: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventConfig {
    pub s: usize,
    /// E3 exponent constant; `None` uses the per-kind default.
    pub epsilon: Option<f64>,
}

impl EventConfig {
    pub fn epsilon_for(&self, kind: ProblemKind) -> f64 {
        self.epsilon.unwrap_or(match kind {
            ProblemKind::Ov => DEFAULT_OV_EPSILON,
            ProblemKind::Cp => DEFAULT_CP_EPSILON,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub group: usize,
    pub j: usize,
    pub group_size: usize,
    /// `None` for CP.
    pub e1_holds: Option<bool>,
    pub e2_holds: bool,
    pub e3_holds: bool,
    /// Inner product (or distance) value → count within the group.
    pub n_alpha: BTreeMap<u32, usize>,
    pub epsilon: f64,
    /// `α` values whose count exceeded the E3 bound.
    pub bound_violations: Vec<f64>,
}

/// `2·e^{−δ²μ/3}`.
pub fn chernoff_bound(mu: f64, delta: f64) -> f64 {
    2.0 * (-delta * delta * mu / 3.0).exp()
}

struct EventGeometry {
    log_n: f64,
    /// `pd`, OV only.
    density_mean: f64,
    e1_radius: f64,
    mean: f64,
    e2_window: (f64, f64),
    alpha_scale: f64,
    alpha_band: (f64, f64),
}

impl EventGeometry {
    fn new(inst: &Instance) -> Result<Self> {
        let n = inst.n();
        if n < 2 {
            return Err(Error::param("event measurement needs n ≥ 2"));
        }
        let d = inst.d() as f64;
        let log_n = (n as f64).log2();
        let c = d / log_n;
        Ok(match inst.kind() {
            ProblemKind::Ov => {
                let p = inst.params.p;
                let mean = p * p * d;
                EventGeometry {
                    log_n,
                    density_mean: p * d,
                    e1_radius: 0.1 * c.powf(0.25) * log_n,
                    mean,
                    e2_window: (mean - 0.2 * log_n, mean + 0.2 * log_n),
                    alpha_scale: log_n,
                    alpha_band: (c.powf(-0.25), 0.2),
                }
            }
            ProblemKind::Cp => {
                let th = distance_threshold(n, inst.d())?;
                let lo = th.t_delta2 as f64;
                EventGeometry {
                    log_n,
                    density_mean: 0.0,
                    e1_radius: 0.0,
                    mean: d / 2.0,
                    e2_window: (lo, d - lo),
                    alpha_scale: d / c.sqrt(),
                    alpha_band: (0.0, th.delta2 * c.sqrt()),
                }
            }
        })
    }

    fn alpha(&self, v: u32) -> f64 {
        (v as f64 - self.mean) / self.alpha_scale
    }

    fn e3_bound(&self, n: usize, s: usize, epsilon: f64, alpha: f64) -> f64 {
        self.log_n * (1.0 + s as f64 * (n as f64).powf(-epsilon * alpha * alpha))
    }
}

fn pair_value(inst: &Instance, i: usize, j: usize) -> u32 {
    match inst.kind() {
        ProblemKind::Ov => inst.xs[i].dot(&inst.ys[j]),
        ProblemKind::Cp => inst.xs[i].hamming(&inst.ys[j]),
    }
}

/// Evaluates E1/E2/E3 on `samples` uniformly drawn (group, j) cells. Draws
/// come from a dedicated stream of the instance seed.
pub fn measure_events(inst: &Instance, cfg: &EventConfig, samples: usize) -> Result<Vec<EventReport>> {
    if samples == 0 {
        return Err(Error::param("samples must be at least 1"));
    }
    if cfg.s == 0 {
        return Err(Error::param("group size s must be at least 1"));
    }
    let geo = EventGeometry::new(inst)?;
    let n = inst.n();
    let s = cfg.s.min(n);
    let groups = n.div_ceil(s);
    let epsilon = cfg.epsilon_for(inst.kind());

    let mut rng = stream_rng(inst.params.seed, Stream::EventSample, 0);
    let cells: Vec<(usize, usize)> = (0..samples)
        .map(|_| (rng.gen_range(0..groups), rng.gen_range(0..n)))
        .collect();

    let reports = cells
        .par_iter()
        .map(|&(g, j)| {
            let members = g * s..((g + 1) * s).min(n);
            let mut n_alpha = BTreeMap::new();
            for i in members.clone() {
                *n_alpha.entry(pair_value(inst, i, j)).or_insert(0usize) += 1;
            }

            let e1_holds = match inst.kind() {
                ProblemKind::Ov => {
                    let weight = inst.ys[j].count_ones() as f64;
                    Some((weight - geo.density_mean).abs() <= geo.e1_radius)
                }
                ProblemKind::Cp => None,
            };
            let (lo, hi) = geo.e2_window;
            let e2_holds = n_alpha.keys().all(|&v| (lo..=hi).contains(&(v as f64)));

            let (band_lo, band_hi) = geo.alpha_band;
            let bound_violations: Vec<f64> = n_alpha
                .iter()
                .filter_map(|(&v, &count)| {
                    let a = geo.alpha(v);
                    let in_band = a.abs() >= band_lo && a.abs() <= band_hi;
                    (in_band && count as f64 > geo.e3_bound(n, s, epsilon, a)).then_some(a)
                })
                .collect();

            EventReport {
                group: g,
                j,
                group_size: members.len(),
                e1_holds,
                e2_holds,
                e3_holds: bound_violations.is_empty(),
                n_alpha,
                epsilon,
                bound_violations,
            }
        })
        .collect();
    Ok(reports)
}

/// Event frequencies over a batch of reports, next to the reference bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventSummary {
    pub samples: usize,
    pub s: usize,
    pub not_e1: Option<f64>,
    pub not_e2: f64,
    pub not_e3: f64,
    /// Chernoff reference for `Pr[¬E1]`: `μ = pd`, `δ = 0.1·c^{1/4}·log n / (pd)`.
    pub chernoff_e1: Option<f64>,
    /// Chernoff reference for one `x` leaving the E2 window, times `s`.
    pub chernoff_e2: Option<f64>,
    /// Stated union bound `s · n^{−0.01}` for `Pr[¬E2]`.
    pub e2_union_bound: f64,
}

pub fn summarize(inst: &Instance, s: usize, reports: &[EventReport]) -> Result<EventSummary> {
    let geo = EventGeometry::new(inst)?;
    let k = reports.len().max(1) as f64;
    let freq = |f: &dyn Fn(&EventReport) -> bool| reports.iter().filter(|r| f(r)).count() as f64 / k;
    let n = inst.n() as f64;
    let s = s.min(inst.n());
    let (not_e1, chernoff_e1, chernoff_e2) = match inst.kind() {
        ProblemKind::Ov => {
            let mu1 = geo.density_mean;
            let mu2 = geo.mean;
            (
                Some(freq(&|r| r.e1_holds == Some(false))),
                Some(chernoff_bound(mu1, geo.e1_radius / mu1)),
                Some(s as f64 * chernoff_bound(mu2, 0.2 * geo.log_n / mu2)),
            )
        }
        ProblemKind::Cp => (None, None, None),
    };
    Ok(EventSummary {
        samples: reports.len(),
        s,
        not_e1,
        not_e2: freq(&|r| !r.e2_holds),
        not_e3: freq(&|r| !r.e3_holds),
        chernoff_e1,
        chernoff_e2,
        e2_union_bound: s as f64 * n.powf(-0.01),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailingRate {
    pub failing: u64,
    pub cells: u64,
}

impl FailingRate {
    pub fn as_f64(&self) -> f64 {
        if self.cells == 0 {
            0.0
        } else {
            self.failing as f64 / self.cells as f64
        }
    }
}

/// Fraction of (group, j) cells at or above the brute-force threshold: `M^q`
/// for OV, `Q(T*)` for CP (the widest threshold the CP loop can reach).
pub fn failing_pair_rate(inst: &Instance, cfg: &SolverConfig) -> Result<FailingRate> {
    let params = cfg.resolve(inst)?;
    let plan = plan_for(inst, &params)?;
    cfg.install(|| {
        let (xs, ys, threshold) = match inst.kind() {
            ProblemKind::Ov => (inst.xs.clone(), inst.ys.clone(), plan.center_power()),
            ProblemKind::Cp => {
                let padded = crate::cpsolver::pad_transform(inst)?;
                let t_star = distance_threshold(inst.n().max(2), inst.d())?.t_star;
                (padded.xs, padded.ys, plan.eval(t_star as i64))
            }
        };
        let groups = partition(&xs, params.s);
        let engine = ScoreEngine::new(Evaluator::Direct, &ys, xs[0].len(), &plan, u64::MAX)?;
        let threshold = Threshold::new(threshold);
        let mut failing = 0;
        engine.for_each_tile(&groups, cfg.tile_cells, |_, tile| {
            failing += tile.count_at_least(&threshold);
            Ok(())
        })?;
        Ok(FailingRate {
            failing,
            cells: (groups.len() * ys.len()) as u64,
        })
    })?
}
