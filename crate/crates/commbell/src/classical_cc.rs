//! Exact one-way distributional communication complexity by exhaustive
//! search, plus the repetition-based bound transformations.
//!
//! A deterministic one-way protocol with a budget of `c` bits is an encoder
//! partitioning Alice's inputs into at most `2^c` message blocks; for a fixed
//! encoder the optimal decoder is greedy per (message, y). The search
//! enumerates encoder partitions as restricted growth strings and keeps the
//! best weighted success. Shared randomness cannot beat the best
//! deterministic protocol on a fixed input distribution, so this search is
//! exact.

use serde::Serialize;
use thiserror::Error;

use crate::partitions;
use crate::problems::CommProblem;

/// Refuse searches that would evaluate more partitions than this.
pub const PARTITION_GUARD: f64 = 1e8;

/// Slack used when comparing float success probabilities against targets.
pub const SUCCESS_SLACK: f64 = 1e-12;

/// Ceiling that forgives float noise just below an integer.
pub(crate) fn ceil_with_slack(x: f64) -> f64 {
    (x - 1e-9).ceil()
}

#[derive(Debug, Error)]
pub enum CcError {
    #[error(
        "partition search would visit ~{estimate:.3e} partitions (guard {PARTITION_GUARD:.0e})"
    )]
    SearchGuard { estimate: f64 },
    #[error("target success {0} outside [0, 1]")]
    TargetOutOfRange(f64),
    #[error("epsilon {0} outside (0, 1/2]")]
    EpsilonOutOfRange(f64),
}

/// Where the values of a [`CcCurve`] came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CurveSource {
    /// Exhaustive search over deterministic one-way protocols.
    ExactSearch,
    /// A closed-form bound with a description of its parameters.
    BoundFormula { description: String },
}

/// Map from message-bit budget to the maximum achievable weighted success.
#[derive(Debug, Clone, Serialize)]
pub struct CcCurve {
    /// `points[c]` is the best success with at most `c` bits.
    pub points: Vec<f64>,
    pub source: CurveSource,
    pub problem_id: String,
}

impl CcCurve {
    /// Best success at budget `bits`; budgets beyond the table saturate.
    pub fn max_success(&self, bits: u32) -> f64 {
        let idx = (bits as usize).min(self.points.len() - 1);
        self.points[idx]
    }

    /// Minimum bits reaching `p_target`, or None if even the largest budget
    /// in the table falls short.
    pub fn complexity(&self, p_target: f64) -> Option<u32> {
        self.points
            .iter()
            .position(|&s| s >= p_target - SUCCESS_SLACK)
            .map(|c| c as u32)
    }
}

/// Bits needed to name every x individually.
pub fn full_disclosure_bits(problem: &CommProblem) -> u32 {
    let nx = problem.nx();
    if nx <= 1 {
        0
    } else {
        usize::BITS - (nx - 1).leading_zeros()
    }
}

fn block_cap(problem: &CommProblem, bits: u32) -> usize {
    let nx = problem.nx();
    if bits >= usize::BITS || (1usize << bits) >= nx {
        nx
    } else {
        1usize << bits
    }
}

fn guard(problem: &CommProblem, cap: usize) -> Result<(), CcError> {
    let estimate = partitions::count(problem.nx(), cap);
    if estimate > PARTITION_GUARD {
        return Err(CcError::SearchGuard { estimate });
    }
    Ok(())
}

/// Per-output weight tables: `w[o][x*ny + y] = mu(x,y) * [o in valid(x,y)]`.
fn weight_tables(problem: &CommProblem) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny) = (problem.nx(), problem.ny());
    let mut w0 = vec![0.0; nx * ny];
    let mut w1 = vec![0.0; nx * ny];
    for x in 0..nx {
        for y in 0..ny {
            let mu = problem.mu(x, y);
            let v = problem.valid(x, y);
            if v.contains(false) {
                w0[x * ny + y] = mu;
            }
            if v.contains(true) {
                w1[x * ny + y] = mu;
            }
        }
    }
    (w0, w1)
}

/// Success of one encoder partition under the greedy decoder. Ties between
/// outputs go to 0; the max is unaffected either way.
fn partition_score(
    assignment: &[u8],
    ny: usize,
    w0: &[f64],
    w1: &[f64],
    scratch: &mut [f64],
) -> f64 {
    scratch.fill(0.0);
    for (x, &block) in assignment.iter().enumerate() {
        let base = (block as usize * ny) * 2;
        for y in 0..ny {
            scratch[base + 2 * y] += w0[x * ny + y];
            scratch[base + 2 * y + 1] += w1[x * ny + y];
        }
    }
    scratch
        .chunks_exact(2)
        .map(|cell| if cell[0] >= cell[1] { cell[0] } else { cell[1] })
        .sum()
}

/// Keep the higher score; on exact ties, the lexicographically earlier
/// partition. Associative, so parallel reductions are order-independent.
fn better(a: (f64, u64), b: (f64, u64)) -> (f64, u64) {
    if a.0 > b.0 || (a.0 == b.0 && a.1 <= b.1) {
        a
    } else {
        b
    }
}

fn best_partition_seq(problem: &CommProblem, cap: usize) -> (f64, u64) {
    let ny = problem.ny();
    let (w0, w1) = weight_tables(problem);
    let mut scratch = vec![0.0; cap * ny * 2];
    let mut best = (f64::NEG_INFINITY, u64::MAX);
    partitions::for_each(problem.nx(), cap, |a, rank| {
        let score = partition_score(a, ny, &w0, &w1, &mut scratch);
        best = better(best, (score, rank));
    });
    best
}

#[cfg(feature = "parallel")]
fn best_partition_par(problem: &CommProblem, cap: usize) -> (f64, u64) {
    use rayon::prelude::*;

    let nx = problem.nx();
    if nx <= 4 {
        return best_partition_seq(problem, cap);
    }
    let ny = problem.ny();
    let (w0, w1) = weight_tables(problem);
    let prefix_len = 5.min(nx - 1);
    partitions::prefixes(nx, cap, prefix_len)
        .into_par_iter()
        .map(|(prefix, start)| {
            let mut scratch = vec![0.0; cap * ny * 2];
            let mut best = (f64::NEG_INFINITY, u64::MAX);
            partitions::for_each_completion(&prefix, nx, cap, start, |a, rank| {
                let score = partition_score(a, ny, &w0, &w1, &mut scratch);
                best = better(best, (score, rank));
            });
            best
        })
        .reduce(|| (f64::NEG_INFINITY, u64::MAX), better)
}

/// Sequential reference search; always available.
pub fn optimal_success_seq(problem: &CommProblem, bits: u32) -> Result<f64, CcError> {
    let cap = block_cap(problem, bits);
    guard(problem, cap)?;
    Ok(best_partition_seq(problem, cap).0)
}

/// Parallel search over encoder partitions; bit-identical to the
/// sequential path.
#[cfg(feature = "parallel")]
pub fn optimal_success_par(problem: &CommProblem, bits: u32) -> Result<f64, CcError> {
    let cap = block_cap(problem, bits);
    guard(problem, cap)?;
    Ok(best_partition_par(problem, cap).0)
}

/// Maximum weighted success over deterministic one-way protocols sending at
/// most `bits` bits.
pub fn optimal_success(problem: &CommProblem, bits: u32) -> Result<f64, CcError> {
    #[cfg(feature = "parallel")]
    {
        optimal_success_par(problem, bits)
    }
    #[cfg(not(feature = "parallel"))]
    {
        optimal_success_seq(problem, bits)
    }
}

/// The full exact curve from 0 bits up to `max_bits`.
pub fn curve(problem: &CommProblem, max_bits: u32) -> Result<CcCurve, CcError> {
    let full = full_disclosure_bits(problem);
    let mut points = Vec::with_capacity(max_bits as usize + 1);
    for bits in 0..=max_bits {
        if bits > full {
            // budgets past full disclosure cannot improve
            let last = *points.last().expect("full >= 0");
            points.push(last);
        } else {
            points.push(optimal_success(problem, bits)?);
        }
    }
    Ok(CcCurve {
        points,
        source: CurveSource::ExactSearch,
        problem_id: format!(
            "{}x{}-n{}",
            problem.nx(),
            problem.ny(),
            problem.size_label()
        ),
    })
}

/// Minimum bits whose optimal success reaches `p_target`, or None when even
/// full disclosure falls short.
pub fn complexity(problem: &CommProblem, p_target: f64) -> Result<Option<u32>, CcError> {
    if !(0.0..=1.0).contains(&p_target) {
        return Err(CcError::TargetOutOfRange(p_target));
    }
    let full = full_disclosure_bits(problem);
    for bits in 0..=full {
        if optimal_success(problem, bits)? >= p_target - SUCCESS_SLACK {
            return Ok(Some(bits));
        }
    }
    Ok(None)
}

/// Communication bound at success `p_s` from a known bound at success 2/3,
/// via repetition and majority vote:
/// `(1/3)(p_s - 1/2)^2 * c_two_thirds` for 1/2 < p_s <= 2/3, the full
/// `c_two_thirds` above 2/3, and 0 at or below the guessing threshold.
///
/// Valid for functions (binary majority); not stated for relation problems
/// with two-sided valid sets.
pub fn pumped_bound(c_two_thirds: f64, p_s: f64) -> f64 {
    assert!(c_two_thirds >= 0.0, "bound at 2/3 must be nonnegative");
    if p_s <= 0.5 {
        0.0
    } else if p_s <= 2.0 / 3.0 {
        (p_s - 0.5).powi(2) / 3.0 * c_two_thirds
    } else {
        c_two_thirds
    }
}

/// Repetitions needed to amplify success 1/2 + epsilon to 2/3 by majority
/// vote: ceil(3 / epsilon^2).
pub fn repetitions_needed(epsilon: f64) -> Result<u64, CcError> {
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(CcError::EpsilonOutOfRange(epsilon));
    }
    Ok(ceil_with_slack(3.0 / (epsilon * epsilon)) as u64)
}
