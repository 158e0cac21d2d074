//! JSON run records. Field order is fixed by the struct layout; `timing` is
//! always last so reports can be compared byte-for-byte up to it.

use std::time::Duration;

use ovcp_core::solver::PlanSummary;
use ovcp_core::{Instance, ProblemKind, Regime, SolveReport};
use serde::Serialize;

pub const VERSION: &str = concat!("ovcp ", env!("CARGO_PKG_VERSION"));

#[derive(Serialize)]
pub struct Params {
    pub kind: ProblemKind,
    pub n: usize,
    pub d: usize,
    pub p: f64,
    pub seed: u64,
    pub q: Option<u32>,
    pub s: Option<usize>,
    #[serde(rename = "D")]
    pub scale: Option<u64>,
    pub evaluator: Option<String>,
    pub strict: Option<bool>,
}

impl Params {
    pub fn of(inst: &Instance) -> Self {
        Params {
            kind: inst.kind(),
            n: inst.n(),
            d: inst.d(),
            p: inst.params.p,
            seed: inst.params.seed,
            q: None,
            s: None,
            scale: None,
            evaluator: None,
            strict: None,
        }
    }
}

#[derive(Serialize)]
pub struct PairResult {
    pub found: bool,
    pub i: Option<usize>,
    pub j: Option<usize>,
    /// Present (possibly null) for OV only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_product: Option<Option<u32>>,
    /// Present (possibly null) for CP only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance: Option<Option<u32>>,
}

impl PairResult {
    pub fn new(kind: ProblemKind, pair: Option<(usize, usize, u32)>) -> Self {
        let value = pair.map(|(_, _, v)| v);
        PairResult {
            found: pair.is_some(),
            i: pair.map(|(i, _, _)| i),
            j: pair.map(|(_, j, _)| j),
            inner_product: (kind == ProblemKind::Ov).then_some(value),
            distance: (kind == ProblemKind::Cp).then_some(value),
        }
    }
}

#[derive(Serialize)]
pub struct Counters {
    pub groups: usize,
    pub cells: u64,
    pub failing_pairs: u64,
    pub failing_fraction: f64,
    pub cell_scans: u64,
    pub fallback_used: bool,
    pub score_evaluations: u32,
    pub regime: Option<Regime>,
    pub distance_bound: Option<u32>,
}

#[derive(Serialize)]
pub struct Timing {
    pub eval_ms: f64,
    pub fallback_ms: f64,
    pub total_ms: f64,
}

pub fn millis(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

#[derive(Serialize)]
pub struct RunRecord {
    pub version: &'static str,
    pub command: &'static str,
    pub method: &'static str,
    pub params: Params,
    pub result: PairResult,
    pub counters: Option<Counters>,
    pub plan: Option<PlanSummary>,
    pub timing: Timing,
}

impl RunRecord {
    pub fn solve(inst: &Instance, report: &SolveReport) -> Self {
        let mut params = Params::of(inst);
        params.q = Some(report.params.q);
        params.s = Some(report.params.s);
        params.scale = Some(report.params.scale);
        params.evaluator = Some(report.evaluator.to_string());
        params.strict = Some(report.strict);
        RunRecord {
            version: VERSION,
            command: "solve",
            method: "grouped",
            params,
            result: PairResult::new(
                report.kind,
                report.found.as_ref().map(|f| (f.i, f.j, f.value)),
            ),
            counters: Some(Counters {
                groups: report.groups,
                cells: report.cells,
                failing_pairs: report.n_failing_pairs,
                failing_fraction: report.failing_fraction(),
                cell_scans: report.cell_scans,
                fallback_used: report.fallback_used,
                score_evaluations: report.score_evaluations,
                regime: report.regime,
                distance_bound: report.distance_bound,
            }),
            plan: report.plan.clone(),
            timing: Timing {
                eval_ms: millis(report.timing.eval),
                fallback_ms: millis(report.timing.fallback),
                total_ms: millis(report.timing.total),
            },
        }
    }

    pub fn oracle(inst: &Instance, pair: Option<(usize, usize, u32)>, elapsed: Duration) -> Self {
        RunRecord {
            version: VERSION,
            command: "oracle",
            method: "oracle",
            params: Params::of(inst),
            result: PairResult::new(inst.kind(), pair),
            counters: None,
            plan: None,
            timing: Timing {
                eval_ms: 0.0,
                fallback_ms: 0.0,
                total_ms: millis(elapsed),
            },
        }
    }
}
