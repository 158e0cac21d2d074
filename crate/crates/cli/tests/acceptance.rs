//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs under `cargo test` as a harness-less target.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use num_bigint::{BigInt, BigUint};
use ovcp_core::instance::dimension_ratio;
use ovcp_core::oracle::events::summarize;
use ovcp_core::polyeval::DEFAULT_SUBSET_LIMIT;
use ovcp_core::solver::plan_for;
use ovcp_core::*;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ovcp")
}

fn scratch() -> tempfile::TempDir {
    tempfile::tempdir().expect("temp dir")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        (v[k / 2 - 1] + v[k / 2]) / 2.0
    }
}

/// `n = 512`, `c ∈ {2, 4}` alternating, `p = √(1/c)` with `c = d / log₂ n`.
fn ov_agreement_params(k: u64) -> InstanceParams {
    let n = 512;
    let c = if k.is_multiple_of(2) { 2.0 } else { 4.0 };
    let d = (c * 9.0f64).round() as usize;
    InstanceParams::ov(n, d, (1.0 / dimension_ratio(n, d)).sqrt(), k)
}

fn cp_optimality_params(k: u64) -> InstanceParams {
    InstanceParams::cp(256, 32, k)
}

fn evaluator_equivalence() -> Check {
    let mut cells = 0usize;
    for k in 0..100u64 {
        let n = [64, 256][k as usize % 2];
        let d = [8, 16, 24][k as usize / 2 % 3];
        let q = [2, 4][k as usize / 6 % 2];
        let s = [4, 8, 16][k as usize / 12 % 3];
        let p = [0.3, 0.5, 0.7][k as usize % 3];
        let inst = generate_instance(InstanceParams::ov(n, d, p, k)).map_err(|e| e.to_string())?;
        let cfg = SolverConfig::default().with_q(q).with_s(s);
        let eff = cfg.resolve(&inst).map_err(|e| e.to_string())?;
        let plan = plan_for(&inst, &eff).map_err(|e| e.to_string())?;
        let groups = ovcp_core::polyeval::partition(&inst.xs, eff.s);
        let direct = direct_group_scores(&groups, &inst.ys, &plan).map_err(|e| e.to_string())?;
        let mono = monomial_group_scores(&groups, &inst.ys, &plan, DEFAULT_SUBSET_LIMIT)
            .map_err(|e| e.to_string())?;
        for i in 0..direct.rows {
            for j in 0..direct.cols {
                ensure(direct.get(i, j) == mono.get(i, j), || {
                    format!("instance {k} (n={n} d={d} q={q} s={s}) differs at ({i}, {j})")
                })?;
            }
        }
        cells += direct.rows * direct.cols;
    }
    Ok(format!("100 instances, {cells} cells identical"))
}

fn ov_oracle_agreement() -> Check {
    let mut with_pair = 0;
    for k in 0..200 {
        let inst = generate_instance(ov_agreement_params(k)).map_err(|e| e.to_string())?;
        let r = solve_ov(&inst, &SolverConfig::default()).map_err(|e| e.to_string())?;
        let truth = brute_force_ov(&inst);
        ensure(r.regime == Some(Regime::Critical), || format!("seed {k}: regime {:?}", r.regime))?;
        ensure(r.found.is_some() == truth.is_some(), || {
            format!("seed {k}: solver {:?} vs oracle {truth:?}", r.found.as_ref().map(|f| (f.i, f.j)))
        })?;
        if let Some(f) = &r.found {
            ensure(inst.xs[f.i].dot(&inst.ys[f.j]) == 0, || format!("seed {k}: pair not orthogonal"))?;
            with_pair += 1;
        }
    }
    Ok(format!("200/200 verdicts agree ({with_pair} with a pair)"))
}

fn ov_planted_completeness() -> Check {
    for k in 0..100u64 {
        let params = ov_agreement_params(2 * k);
        let n = params.n;
        let inst = generate_instance(params).map_err(|e| e.to_string())?;
        let pos = ((k as usize * 37 + 5) % n, (k as usize * 91 + 11) % n);
        let inst = plant_pair(&inst, 0, pos).map_err(|e| e.to_string())?;
        let r = solve_ov(&inst, &SolverConfig::default()).map_err(|e| e.to_string())?;
        let f = r.found.ok_or_else(|| format!("seed {k}: planted pair missed"))?;
        ensure(f.x.dot(&f.y) == 0, || format!("seed {k}: returned pair not orthogonal"))?;
    }
    Ok("100/100 planted instances solved".into())
}

fn cp_optimality() -> Check {
    let mut fallbacks = 0;
    for k in 0..100 {
        let inst = generate_instance(cp_optimality_params(k)).map_err(|e| e.to_string())?;
        let r = solve_cp(&inst, &SolverConfig::default()).map_err(|e| e.to_string())?;
        let (_, _, best) = brute_force_cp(&inst).map_err(|e| e.to_string())?;
        let f = r.found.ok_or("no pair returned")?;
        ensure(f.value == best && inst.xs[f.i].hamming(&inst.ys[f.j]) == best, || {
            format!("seed {k}: distance {} vs oracle {best}", f.value)
        })?;
        fallbacks += r.fallback_used as u32;
    }
    Ok(format!("100/100 optimal ({fallbacks} via fallback)"))
}

fn padding_identity() -> Check {
    let config = Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let strategy = (1usize..=64).prop_flat_map(|d| {
        let v = || prop::collection::vec(any::<bool>(), d).prop_map(|b| BitVector::from_bools(&b));
        (v(), v())
    });
    runner
        .run(&strategy, |(u, v)| {
            let (x, y) = (cpsolver::pad_left(&u), cpsolver::pad_right(&v));
            prop_assert_eq!(x.dot(&y), u.hamming(&v));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("10000 random pairs, d ≤ 64".into())
}

fn tail_exactness() -> Check {
    let frac = |t: &TailValue| (t.numerator.clone(), t.denominator.clone());
    let b = |v: u64| BigUint::from(v);
    ensure(frac(&binomial_tail(8, 3)) == (b(1 + 8 + 28 + 56), b(256)), || "tail(8, 3)".into())?;
    ensure(frac(&binomial_tail(4, 1)) == (b(1 + 4), b(16)), || "tail(4, 1)".into())?;
    for d in 0..=64usize {
        let t = binomial_tail(d, d);
        ensure(t.numerator == t.denominator && t.denominator == BigUint::from(1u8) << d, || {
            format!("tail({d}, {d}) ≠ 1")
        })?;
    }
    for d in 0..=16usize {
        for t in 0..=d {
            let count = (0u32..1 << d).filter(|v| v.count_ones() as usize <= t).count() as u64;
            ensure(binomial_tail(d, t).numerator == b(count), || format!("tail({d}, {t}) vs enumeration"))?;
        }
    }
    let th = distance_threshold(16, 8).map_err(|e| e.to_string())?;
    ensure(th.t_star == 3, || format!("T*(16, 8) = {}", th.t_star))?;
    Ok("hand values, tail(d, d) = 1 for d ≤ 64, enumeration for d ≤ 16, T*(16, 8) = 3".into())
}

/// Number of subsets of `mask` with each size, by listing all subsets of `[d]`.
fn subset_sizes(mask: u32, d: usize) -> Vec<u64> {
    let mut sizes = vec![0u64; d + 1];
    for s in 0u32..1 << d {
        if s & mask == s {
            sizes[s.count_ones() as usize] += 1;
        }
    }
    sizes
}

fn weight_enumeration() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0u64;
    for q in [2u32, 4] {
        for trial in 0..3 {
            let scale: u64 = rng.gen_range(1..=2000);
            let center = BigInt::from(rng.gen_range(0i64..=8 * scale as i64));
            let w = monomial_weights(q, &center, scale);
            for d in [8usize, 1 + trial * 3] {
                let sizes: Vec<Vec<u64>> = (0u32..1 << d).map(|m| subset_sizes(m, d)).collect();
                for x in 0u32..1 << d {
                    for y in 0u32..1 << d {
                        let counts = &sizes[(x & y) as usize];
                        let lhs: BigInt = (0..=(q as usize).min(d))
                            .map(|m| &w[m] * BigInt::from(counts[m]))
                            .sum();
                        let z = (x & y).count_ones() as i64;
                        let rhs = (BigInt::from(scale as i64 * z) - &center).pow(q);
                        ensure(lhs == rhs, || format!("q={q} d={d} M={center} D={scale} x={x:b} y={y:b}"))?;
                        checked += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{checked} (x, y) pairs over q ∈ {{2, 4}}, random (M, D), d ≤ 8"))
}

fn failing_rate_monotone() -> Check {
    let n = 2048;
    let d = 22;
    let p = (1.0 / dimension_ratio(n, d)).sqrt();
    let mut medians = Vec::new();
    for q in [2u32, 4, 6] {
        let mut rates = Vec::new();
        for seed in 0..20 {
            let inst = generate_instance(InstanceParams::ov(n, d, p, seed)).map_err(|e| e.to_string())?;
            let cfg = SolverConfig::default().with_q(q).with_s(16);
            rates.push(failing_pair_rate(&inst, &cfg).map_err(|e| e.to_string())?.as_f64());
        }
        medians.push(median(rates));
    }
    let shown = format!("medians q=2,4,6: {:.5}, {:.5}, {:.5}", medians[0], medians[1], medians[2]);
    ensure(medians.windows(2).all(|w| w[1] <= w[0]), || shown.clone())?;
    Ok(shown)
}

fn event_bounds() -> Check {
    let n = 4096;
    let d = 24;
    let k = 1000;
    let inst = generate_instance(InstanceParams::ov(n, d, 0.5f64.sqrt(), 2024)).map_err(|e| e.to_string())?;
    let sigma3 = |b: f64| {
        let b = b.clamp(0.0, 1.0);
        3.0 * (b * (1.0 - b) / k as f64).sqrt()
    };
    let mut shown = Vec::new();
    for s in [1usize, 16] {
        let cfg = EventConfig { s, epsilon: None };
        let reports = measure_events(&inst, &cfg, k).map_err(|e| e.to_string())?;
        let sum = summarize(&inst, s, &reports).map_err(|e| e.to_string())?;
        let (e1, ref1) = (sum.not_e1.unwrap(), sum.chernoff_e1.unwrap());
        ensure(e1 <= ref1 + sigma3(ref1), || format!("s={s}: ¬E1 {e1:.3} > Chernoff {ref1:.3}"))?;
        let (e2, ref2) = (sum.not_e2, sum.e2_union_bound);
        ensure(e2 <= ref2 + sigma3(ref2), || format!("s={s}: ¬E2 {e2:.3} > s·n^-0.01 = {ref2:.3}"))?;
        shown.push(format!("s={s}: ¬E1 {e1:.3} ≤ {ref1:.3}, ¬E2 {e2:.3} ≤ {ref2:.3}"));
    }
    Ok(shown.join("; "))
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn bench_fraction() -> Check {
    let calibration = workspace_root().join("calibration/ov_c2.json");
    let text = fs::read_to_string(&calibration).map_err(|e| format!("{}: {e}", calibration.display()))?;
    let cal: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let chosen = (&cal["chosen"]["q"], &cal["chosen"]["s"]);

    let dir = scratch();
    let csv_path = dir.path().join("bench.csv");
    let out = Command::new(bin())
        .args(["bench", "--n", "4096,8192,16384", "--c", "2", "--seeds", "2", "--calibration"])
        .arg(&calibration)
        .arg("--csv")
        .arg(&csv_path)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;

    let mut reader = csv::Reader::from_path(&csv_path).map_err(|e| e.to_string())?;
    let header = reader.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or(format!("missing column {name}"));
    let (method, n_col, frac, total, agrees) =
        (col("method")?, col("n")?, col("failing_fraction")?, col("total_ms")?, col("agrees")?);
    let mut worst = 0.0f64;
    let mut per_n: Vec<(String, f64, f64)> = Vec::new();
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        rows += 1;
        ensure(&rec[agrees] == "true", || format!("solver and oracle disagree: {rec:?}"))?;
        let ms: f64 = rec[total].parse().map_err(|_| "bad total_ms")?;
        let n = rec[n_col].to_string();
        let slot = match per_n.iter().position(|e| e.0 == n) {
            Some(i) => i,
            None => {
                per_n.push((n, 0.0, 0.0));
                per_n.len() - 1
            }
        };
        if &rec[method] == "solver" {
            worst = worst.max(rec[frac].parse().map_err(|_| "bad failing_fraction")?);
            per_n[slot].1 += ms;
        } else {
            per_n[slot].2 += ms;
        }
    }
    ensure(rows == 12, || format!("expected 12 rows, got {rows}"))?;
    let times: Vec<String> = per_n
        .iter()
        .map(|(n, s, o)| format!("n={n} solver {s:.0} ms / oracle {o:.0} ms"))
        .collect();
    let shown = format!(
        "calibrated q={} s={}: max brute-forced fraction {worst:.4}; {}",
        chosen.0,
        chosen.1,
        times.join(", ")
    );
    ensure(worst < 0.5, || shown.clone())?;
    Ok(shown)
}

fn strip_timing(json: &[u8]) -> Result<String, String> {
    let text = String::from_utf8(json.to_vec()).map_err(|e| e.to_string())?;
    let cut = text.find("\"timing\"").ok_or("no timing field")?;
    Ok(text[..cut].to_string())
}

fn thread_determinism() -> Check {
    let dir = scratch();
    let mut runs = 0;
    let cases = (0..200)
        .map(ov_agreement_params)
        .chain((0..100).map(cp_optimality_params));
    for (k, params) in cases.enumerate() {
        let path = dir.path().join(format!("{k}.ovcp"));
        let inst = generate_instance(params).map_err(|e| e.to_string())?;
        write_instance(&inst, &path).map_err(|e| e.to_string())?;
        let outputs = ["1", "8"]
            .iter()
            .map(|t| {
                let out = Command::new(bin())
                    .arg("solve")
                    .arg("--in")
                    .arg(&path)
                    .args(["--threads", t])
                    .output()
                    .map_err(|e| e.to_string())?;
                let code = out.status.code();
                ensure(code == Some(0) || code == Some(1), || {
                    format!("instance {k}: exit {code:?}: {}", String::from_utf8_lossy(&out.stderr))
                })?;
                Ok((code, strip_timing(&out.stdout)?))
            })
            .collect::<Result<Vec<_>, String>>()?;
        ensure(outputs[0] == outputs[1], || format!("instance {k}: reports differ between 1 and 8 threads"))?;
        runs += 2;
    }
    Ok(format!("{runs} runs, 300 report pairs byte-identical up to timing"))
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("evaluator equivalence", evaluator_equivalence),
        ("OV oracle agreement", ov_oracle_agreement),
        ("OV planted completeness", ov_planted_completeness),
        ("CP exact optimality", cp_optimality),
        ("padding identity", padding_identity),
        ("binomial-tail exactness", tail_exactness),
        ("multilinear weight correctness", weight_enumeration),
        ("failing-pair monotonicity", failing_rate_monotone),
        ("event-bound consistency", event_bounds),
        ("bench brute-forced fraction", bench_fraction),
        ("thread-count determinism", thread_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    println!("acceptance: {} criteria", criteria.len());
    for (k, (name, check)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || *f == id.to_string()) {
            continue;
        }
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {:?}", p.downcast_ref::<String>())));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} failed");
        std::process::exit(1);
    }
    println!("acceptance: all passed");
}
