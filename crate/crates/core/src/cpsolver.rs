//! Average-case Closest Pair via the padding reduction.
//!
//! `x = u ‖ (1 − u)` and `y = (1 − v) ‖ v` satisfy `⟨x, y⟩ = Hamming(u, v)`, so
//! the OV machinery applies with center `d/2`. Scores are computed once; each
//! candidate distance `t ≤ T*` only changes the threshold `Q(t)`.

use std::time::Instant;

use num_bigint::{BigInt, BigUint};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitvec::BitVector;
use crate::error::{Error, Result};
use crate::instance::{Instance, ProblemKind};
use crate::oracle::{brute_force_cp, cumulative_binomials, TailValue};
use crate::polyeval::{partition, ScoreEngine, Threshold};
use crate::solver::{plan_for, FoundPair, PlanSummary, SolveReport, SolverConfig};

#[derive(Clone, Debug)]
pub struct PaddedInstance<'a> {
    pub xs: Vec<BitVector>,
    pub ys: Vec<BitVector>,
    pub origin: &'a Instance,
}

pub fn pad_left(u: &BitVector) -> BitVector {
    u.concat(&u.complement())
}

pub fn pad_right(v: &BitVector) -> BitVector {
    v.complement().concat(v)
}

pub fn pad_transform(inst: &Instance) -> Result<PaddedInstance<'_>> {
    inst.expect_kind(ProblemKind::Cp)?;
    Ok(PaddedInstance {
        xs: inst.xs.par_iter().map(pad_left).collect(),
        ys: inst.ys.par_iter().map(pad_right).collect(),
        origin: inst,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpThresholds {
    /// Smallest `T` with `Pr[Bin(d, 1/2) ≤ T] ≥ n^{−1/2}`.
    pub t_star: u32,
    /// Smallest `T` with `Pr[Bin(d, 1/2) ≤ T] ≥ n^{−1/100}`.
    pub t_delta2: u32,
    pub delta: f64,
    pub delta2: f64,
}

fn smallest_tail_at_least(sums: &[BigUint], d: usize, n: u64, a: u32, b: u32) -> u32 {
    let den = BigUint::from(1u32) << d;
    (0..=d)
        .find(|&t| {
            TailValue {
                numerator: sums[t].clone(),
                denominator: den.clone(),
            }
            .at_least_inverse_power(n, a, b)
        })
        .unwrap_or(d) as u32
}

/// Exact candidate-distance thresholds from binomial tails.
pub fn distance_threshold(n: usize, d: usize) -> Result<CpThresholds> {
    if n < 2 {
        return Err(Error::param("distance threshold needs n ≥ 2"));
    }
    let sums = cumulative_binomials(d);
    let t_star = smallest_tail_at_least(&sums, d, n as u64, 1, 2);
    let t_delta2 = smallest_tail_at_least(&sums, d, n as u64, 1, 100);
    let half = d as f64 / 2.0;
    Ok(CpThresholds {
        t_star,
        t_delta2,
        delta: (half - t_star as f64) / d as f64,
        delta2: (half - t_delta2 as f64) / d as f64,
    })
}

pub fn solve_cp(inst: &Instance, cfg: &SolverConfig) -> Result<SolveReport> {
    inst.expect_kind(ProblemKind::Cp)?;
    let params = cfg.resolve(inst)?;
    let started = Instant::now();
    let mut report = SolveReport::empty(ProblemKind::Cp, params, cfg);
    let d = inst.d();
    let t_star = if inst.n() >= 2 {
        distance_threshold(inst.n(), d)?.t_star
    } else {
        d as u32
    };
    report.distance_bound = Some(t_star);

    cfg.install(|| -> Result<()> {
        let padded = pad_transform(inst)?;
        let plan = plan_for(inst, &params)?;
        let groups = partition(&padded.xs, params.s);

        // Distinct thresholds Q(0..=T*) in descending order; a cell's rank is
        // the first level it reaches, and it is active at distance t iff
        // rank ≤ level_of[t].
        let q_values: Vec<BigInt> = (0..=t_star).map(|t| plan.eval(t as i64)).collect();
        let mut levels = q_values.clone();
        levels.sort_unstable_by(|a, b| b.cmp(a));
        levels.dedup();
        let level_of: Vec<usize> = q_values
            .iter()
            .map(|v| levels.iter().position(|l| l == v).expect("value is a level"))
            .collect();
        let thresholds: Vec<Threshold> = levels.into_iter().map(Threshold::new).collect();

        let t = Instant::now();
        let engine = ScoreEngine::new(cfg.evaluator, &padded.ys, 2 * d, &plan, cfg.subset_limit)?;
        let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
        engine.for_each_tile(&groups, cfg.tile_cells, |offset, tile| {
            let found = (0..tile.rows).into_par_iter().flat_map_iter(|i| {
                let thresholds = &thresholds;
                (0..tile.cols).filter_map(move |j| {
                    thresholds
                        .iter()
                        .position(|th| tile.at_least(i, j, th))
                        .map(|rank| (offset + i, j, rank))
                })
            });
            candidates.par_extend(found);
            Ok(())
        })?;
        report.score_evaluations += 1;
        report.timing.eval += t.elapsed();
        report.groups = groups.len();
        report.cells = (groups.len() * inst.n()) as u64;
        report.plan = Some(PlanSummary::new(&plan, 2 * d));

        let t = Instant::now();
        for dist in 0..=t_star {
            let level = level_of[dist as usize];
            let active: Vec<(usize, usize)> = candidates
                .par_iter()
                .filter(|c| c.2 <= level)
                .map(|&(g, j, _)| (g, j))
                .collect();
            report.n_failing_pairs = active.len() as u64;
            report.cell_scans += active.len() as u64;
            let hit = active
                .par_iter()
                .filter_map(|&(g, j)| {
                    let y = &padded.ys[j];
                    groups[g]
                        .iter()
                        .position(|x| x.dot(y) == dist)
                        .map(|w| (g * params.s + w, j))
                })
                .min();
            if let Some((i, j)) = hit {
                report.found = Some(found_pair(inst, i, j));
                break;
            }
        }
        report.timing.fallback += t.elapsed();

        if report.found.is_none() {
            let t = Instant::now();
            let (i, j, _) = brute_force_cp(inst)?;
            report.found = Some(found_pair(inst, i, j));
            report.fallback_used = true;
            report.timing.fallback += t.elapsed();
        }
        Ok(())
    })??;

    report.timing.total = started.elapsed();
    Ok(report)
}

fn found_pair(inst: &Instance, i: usize, j: usize) -> FoundPair {
    FoundPair {
        i,
        j,
        value: inst.xs[i].hamming(&inst.ys[j]),
        x: inst.xs[i].clone(),
        y: inst.ys[j].clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_instance, plant_distance, InstanceParams};
    use crate::polyeval::Evaluator;

    fn bv(s: &str) -> BitVector {
        BitVector::parse(s).unwrap()
    }

    #[test]
    fn pad_example() {
        let (u, v) = (bv("10"), bv("11"));
        let (x, y) = (pad_left(&u), pad_right(&v));
        assert_eq!(x.to_string(), "1001");
        assert_eq!(y.to_string(), "0011");
        assert_eq!(x.dot(&y), 1);
        assert_eq!(x.dot(&y), u.hamming(&v));
        assert_eq!(pad_left(&u).dot(&pad_right(&u)), 0);
    }

    #[test]
    fn padded_vectors_have_d_ones() {
        let inst = generate_instance(InstanceParams::cp(20, 16, 4)).unwrap();
        let padded = pad_transform(&inst).unwrap();
        for (k, (x, y)) in padded.xs.iter().zip(&padded.ys).enumerate() {
            assert_eq!(x.count_ones(), 16);
            assert_eq!(y.count_ones(), 16);
            for (j, y2) in padded.ys.iter().enumerate() {
                assert_eq!(x.dot(y2), inst.xs[k].hamming(&inst.ys[j]));
            }
        }
    }

    #[test]
    fn threshold_example_and_monotonicity() {
        let th = distance_threshold(16, 8).unwrap();
        assert_eq!(th.t_star, 3);
        assert!((th.delta - 1.0 / 8.0).abs() < 1e-12);
        assert!(distance_threshold(256, 8).unwrap().t_star <= th.t_star);
        assert!(distance_threshold(1, 8).is_err());
        assert!(th.t_delta2 >= th.t_star);
    }

    #[test]
    fn threshold_invariants() {
        for d in [8usize, 16, 20, 32, 48] {
            for n in [4usize, 16, 256, 1024, 4096] {
                let th = distance_threshold(n, d).unwrap();
                let t = th.t_star as usize;
                assert!(t * 2 <= d, "n={n} d={d} T*={t}");
                let tail = |t| crate::oracle::binomial_tail(d, t);
                assert!(tail(t).at_least_inverse_power(n as u64, 1, 2));
                if t > 0 {
                    assert!(!tail(t - 1).at_least_inverse_power(n as u64, 1, 2));
                }
            }
        }
    }

    #[test]
    fn small_example_matches_enumeration() {
        let params = InstanceParams::cp(2, 4, 0);
        let inst = Instance::new(
            params,
            vec![bv("0000"), bv("1111")],
            vec![bv("0001"), bv("1110")],
        )
        .unwrap();
        let r = solve_cp(&inst, &SolverConfig::default().with_s(1)).unwrap();
        let f = r.found.unwrap();
        assert_eq!(f.value, 1);
        assert_eq!((f.i, f.j), (0, 0));
        assert_eq!(brute_force_cp(&inst).unwrap(), (0, 0, 1));
    }

    #[test]
    fn planted_identical_pair_has_distance_zero() {
        let inst = generate_instance(InstanceParams::cp(128, 24, 6)).unwrap();
        let inst = plant_distance(&inst, 0, (77, 3)).unwrap();
        for evaluator in [Evaluator::Direct, Evaluator::Monomial] {
            let cfg = SolverConfig::default().with_q(2).with_s(8).with_evaluator(evaluator);
            let r = solve_cp(&inst, &cfg).unwrap();
            let f = r.found.unwrap();
            assert_eq!(f.value, 0);
            assert_eq!(Some((f.i, f.j, 0)), brute_force_cp(&inst).ok());
            assert!(!r.fallback_used);
            assert_eq!(r.score_evaluations, 1);
        }
    }

    #[test]
    fn matches_oracle_on_random_instances() {
        for seed in 0..10 {
            let inst = generate_instance(InstanceParams::cp(128, 20, seed)).unwrap();
            let r = solve_cp(&inst, &SolverConfig::default().with_q(4).with_s(4)).unwrap();
            let (_, _, dist) = brute_force_cp(&inst).unwrap();
            let f = r.found.unwrap();
            assert_eq!(f.value, dist, "seed {seed}");
            assert_eq!(r.score_evaluations, 1);
        }
    }

    #[test]
    fn falls_back_when_no_pair_within_bound() {
        // X all zeros, Y all ones: every distance is d > T*.
        let params = InstanceParams::cp(4, 8, 0);
        let inst = Instance::new(
            params,
            vec![BitVector::zeros(8); 4],
            vec![BitVector::ones(8); 4],
        )
        .unwrap();
        let r = solve_cp(&inst, &SolverConfig::default().with_s(2)).unwrap();
        assert!(r.fallback_used);
        let f = r.found.unwrap();
        assert_eq!((f.i, f.j, f.value), (0, 0, 8));
    }

    #[test]
    fn rejects_ov_instance() {
        let inst = generate_instance(InstanceParams::ov(4, 8, 0.5, 0)).unwrap();
        assert!(matches!(
            solve_cp(&inst, &SolverConfig::default()),
            Err(Error::KindMismatch { .. })
        ));
    }
}
