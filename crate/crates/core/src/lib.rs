//! Grouped polynomial-method solvers for average-case Orthogonal Vectors and
//! average-case Closest Pair on random Boolean vectors.
//!
//! Every score is an exact integer and every "no pair" verdict from the full
//! grouped pipeline is certain. [`oracle`] holds the brute-force ground truth
//! and the event diagnostics.

pub mod bitvec;
pub mod cpsolver;
pub mod error;
pub mod instance;
pub mod oracle;
pub mod ovsolver;
pub mod polyeval;
pub mod solver;

pub use bitvec::BitVector;
pub use cpsolver::{distance_threshold, pad_transform, solve_cp, CpThresholds, PaddedInstance};
pub use error::{Error, Result};
pub use instance::{
    generate_instance, plant_distance, plant_pair, read_instance, write_instance, Instance,
    InstanceParams, ProblemKind,
};
pub use oracle::events::{failing_pair_rate, measure_events, EventConfig, EventReport};
pub use oracle::{binomial_tail, brute_force_cp, brute_force_ov, TailValue};
pub use ovsolver::{default_params, regime, solve_ov, Regime};
pub use polyeval::{
    direct_group_scores, evaluate_q, make_plan, monomial_budget, monomial_group_scores,
    monomial_weights, surjection_count, Evaluator, GroupScores, MonomialBudget, ScorePlan,
};
pub use solver::{EffectiveParams, FoundPair, SolveReport, SolverConfig};

/// Dispatches on the instance kind.
pub fn solve(inst: &Instance, cfg: &SolverConfig) -> Result<SolveReport> {
    match inst.kind() {
        ProblemKind::Ov => solve_ov(inst, cfg),
        ProblemKind::Cp => solve_cp(inst, cfg),
    }
}
