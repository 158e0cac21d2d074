//! Benchmark table and pilot calibration of `(q, s)`.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use ovcp_core::{
    brute_force_cp, brute_force_ov, failing_pair_rate, generate_instance, solve, Instance,
    InstanceParams, ProblemKind, SolverConfig,
};
use serde::{Deserialize, Serialize};

use crate::record::{millis, VERSION};

/// `d = round(c · log₂ n)`.
pub fn dimension_for(n: usize, c: f64) -> usize {
    (c * (n as f64).log2()).round() as usize
}

pub fn bench_params(kind: ProblemKind, n: usize, c: f64, seed: u64) -> InstanceParams {
    let d = dimension_for(n, c);
    match kind {
        ProblemKind::Ov => {
            let p = if n >= 2 && d >= 1 {
                (1.0 / ovcp_core::instance::dimension_ratio(n, d)).sqrt()
            } else {
                (1.0 / c).sqrt()
            };
            InstanceParams::ov(n, d, p, seed)
        }
        ProblemKind::Cp => InstanceParams::cp(n, d, seed),
    }
}

/// One line of the bench CSV. The column order here is the documented header.
#[derive(Debug, Serialize, Deserialize)]
pub struct BenchRow {
    pub kind: ProblemKind,
    pub n: usize,
    pub d: usize,
    pub c: f64,
    pub p: f64,
    pub seed: u64,
    pub q: u32,
    pub s: usize,
    pub method: String,
    pub found: bool,
    pub i: Option<usize>,
    pub j: Option<usize>,
    pub value: Option<u32>,
    pub groups: Option<usize>,
    pub cells: Option<u64>,
    pub failing_pairs: Option<u64>,
    pub failing_fraction: Option<f64>,
    pub fallback_used: Option<bool>,
    pub eval_ms: f64,
    pub fallback_ms: f64,
    pub total_ms: f64,
    pub agrees: bool,
}

pub struct BenchSetup {
    pub kind: ProblemKind,
    pub ns: Vec<usize>,
    pub c: f64,
    pub seeds: u64,
    /// `None` entries take the per-instance default.
    pub qs: Vec<Option<u32>>,
    pub ss: Vec<Option<usize>>,
    pub base: SolverConfig,
}

fn oracle_pair(inst: &Instance) -> Result<Option<(usize, usize, u32)>> {
    Ok(match inst.kind() {
        ProblemKind::Ov => brute_force_ov(inst).map(|(i, j)| (i, j, 0)),
        ProblemKind::Cp => Some(brute_force_cp(inst)?),
    })
}

pub fn run_bench(setup: &BenchSetup) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &n in &setup.ns {
        for seed in 0..setup.seeds {
            let params = bench_params(setup.kind, n, setup.c, seed);
            let inst = generate_instance(params)?;
            for &q in &setup.qs {
                for &s in &setup.ss {
                    let mut cfg = setup.base.clone();
                    cfg.q = q.or(cfg.q);
                    cfg.s = s.or(cfg.s);
                    let report = solve(&inst, &cfg)?;

                    let started = Instant::now();
                    let truth = oracle_pair(&inst)?;
                    let oracle_ms = millis(started.elapsed());

                    let got = report.found.as_ref().map(|f| (f.i, f.j, f.value));
                    let agrees = match setup.kind {
                        ProblemKind::Ov => got.is_some() == truth.is_some(),
                        ProblemKind::Cp => got.map(|g| g.2) == truth.map(|t| t.2),
                    };
                    let row = |method: &str, pair: Option<(usize, usize, u32)>| BenchRow {
                        kind: setup.kind,
                        n,
                        d: params.d,
                        c: setup.c,
                        p: params.p,
                        seed,
                        q: report.params.q,
                        s: report.params.s,
                        method: method.to_string(),
                        found: pair.is_some(),
                        i: pair.map(|p| p.0),
                        j: pair.map(|p| p.1),
                        value: pair.map(|p| p.2),
                        groups: None,
                        cells: None,
                        failing_pairs: None,
                        failing_fraction: None,
                        fallback_used: None,
                        eval_ms: 0.0,
                        fallback_ms: 0.0,
                        total_ms: 0.0,
                        agrees,
                    };
                    rows.push(BenchRow {
                        groups: Some(report.groups),
                        cells: Some(report.cells),
                        failing_pairs: Some(report.n_failing_pairs),
                        failing_fraction: Some(report.failing_fraction()),
                        fallback_used: Some(report.fallback_used),
                        eval_ms: millis(report.timing.eval),
                        fallback_ms: millis(report.timing.fallback),
                        total_ms: millis(report.timing.total),
                        ..row("solver", got)
                    });
                    rows.push(BenchRow {
                        total_ms: oracle_ms,
                        ..row("oracle", truth)
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_csv(rows: &[BenchRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub q: u32,
    pub s: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PilotPoint {
    pub q: u32,
    pub s: usize,
    /// Per (n, seed), in sweep order.
    pub fractions: Vec<f64>,
    pub max_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Calibration {
    pub version: String,
    pub kind: ProblemKind,
    pub c: f64,
    pub n: Vec<usize>,
    pub seeds: Vec<u64>,
    pub target: f64,
    pub grid: Vec<PilotPoint>,
    pub chosen: Choice,
}

pub fn read_calibration(path: &Path) -> Result<Calibration> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub struct CalibrationSetup {
    pub kind: ProblemKind,
    pub ns: Vec<usize>,
    pub c: f64,
    pub seeds: Vec<u64>,
    pub qs: Vec<u32>,
    pub ss: Vec<usize>,
    pub target: f64,
    pub base: SolverConfig,
}

/// Measures the brute-forced cell fraction on pilot instances for every
/// `(q, s)` in the grid and keeps the largest `s` whose worst pilot stays
/// below `target`, preferring smaller `q` on ties.
pub fn calibrate(setup: &CalibrationSetup) -> Result<Calibration> {
    let mut instances = Vec::new();
    for &n in &setup.ns {
        for &seed in &setup.seeds {
            instances.push(generate_instance(bench_params(setup.kind, n, setup.c, seed))?);
        }
    }
    let mut grid = Vec::new();
    for &q in &setup.qs {
        for &s in &setup.ss {
            let cfg = setup.base.clone().with_q(q).with_s(s);
            let fractions = instances
                .iter()
                .map(|inst| Ok(failing_pair_rate(inst, &cfg)?.as_f64()))
                .collect::<Result<Vec<f64>>>()?;
            let max_fraction = fractions.iter().cloned().fold(0.0, f64::max);
            grid.push(PilotPoint {
                q,
                s,
                fractions,
                max_fraction,
            });
        }
    }
    let chosen = grid
        .iter()
        .filter(|g| g.max_fraction < setup.target)
        .max_by_key(|g| (g.s, std::cmp::Reverse(g.q)))
        .map(|g| Choice { q: g.q, s: g.s })
        .context("no (q, s) in the grid meets the target fraction")?;
    Ok(Calibration {
        version: VERSION.to_string(),
        kind: setup.kind,
        c: setup.c,
        n: setup.ns.clone(),
        seeds: setup.seeds.clone(),
        target: setup.target,
        grid,
        chosen,
    })
}
