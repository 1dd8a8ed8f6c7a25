//! The classical one-way protocol compiled from a correlation box.
//!
//! Alice and Bob share `N = ceil(k / p_A)` instances of the box. Both
//! measure with their inputs on every instance; Alice sends the index of the
//! first instance where she got outcome 1, or ABORT if none did. Bob answers
//! with his outcome on that instance, or a fair coin after ABORT. The
//! message costs `ceil(log2 N)` bits for the index plus one bit for ABORT.
//!
//! `exact_success` is the exact per-pair closed form of that procedure;
//! `guaranteed_success` is the coarser averaged bound `(1-delta) p_B +
//! delta/2` with `delta = 2^-k`, which the exact value dominates whenever
//! acceptance is constant over the support and the conditional success is at
//! least 1/2. The seeded Monte Carlo run validates the closed form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::classical_cc::ceil_with_slack;
use crate::correlations::{pair_stats, summarize, BoxError, BoxSummary, CorrelationBox};
use crate::problems::CommProblem;

/// Trials per RNG stream; fixed so that results do not depend on how chunks
/// are scheduled across workers.
pub const SIM_CHUNK: u64 = 8192;

#[derive(Debug, Error)]
pub enum PiBError {
    #[error("{0}")]
    Box(#[from] BoxError),
    #[error("Alice never accepts (p_A = 0); the indexing protocol is undefined")]
    NoAcceptance,
    #[error("k must be at least 1")]
    BadK,
    #[error("trials must be at least 1")]
    BadTrials,
}

/// A compiled index-of-first-acceptance protocol.
#[derive(Debug, Clone)]
pub struct PiBProtocol {
    bx: CorrelationBox,
    problem: CommProblem,
    k: u32,
    delta: f64,
    copies: u64,
    message_bits: u32,
    summary: BoxSummary,
}

/// Outcome of a Monte Carlo validation run.
#[derive(Debug, Clone, Serialize)]
pub struct SimResult {
    pub trials: u64,
    pub successes: u64,
    pub estimate: f64,
    /// Binomial standard error of the estimate.
    pub std_error: f64,
}

fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

/// Compile a box into the protocol with abort probability target
/// `delta = 2^-k`.
pub fn compile(
    bx: &CorrelationBox,
    problem: &CommProblem,
    k: u32,
) -> Result<PiBProtocol, PiBError> {
    if k < 1 {
        return Err(PiBError::BadK);
    }
    let summary = summarize(bx, problem)?;
    if summary.p_a <= 0.0 {
        return Err(PiBError::NoAcceptance);
    }
    let copies = ceil_with_slack(k as f64 / summary.p_a).max(1.0) as u64;
    let message_bits = ceil_log2(copies) + 1;
    Ok(PiBProtocol {
        bx: bx.clone(),
        problem: problem.clone(),
        k,
        delta: 0.5f64.powi(k as i32),
        copies,
        message_bits,
        summary,
    })
}

/// Success probability of a fair coin against the valid set of a pair;
/// 1/2 for functions, 1 on don't-care pairs.
fn abort_success(problem: &CommProblem, xi: usize, yi: usize) -> f64 {
    let valid = problem.valid(xi, yi);
    0.5 * f64::from(u8::from(valid.contains(false)) + u8::from(valid.contains(true)))
}

/// Exact success of the protocol run with `copies` shared instances:
/// per pair, acceptance fails all instances with probability
/// `r^copies` (r = 1 - p(a=1|x,y)), in which case a fair coin answers;
/// otherwise Bob's conditional success applies.
pub fn exact_success_for_copies(
    bx: &CorrelationBox,
    problem: &CommProblem,
    copies: u64,
) -> Result<f64, PiBError> {
    let mut total = 0.0;
    for stat in pair_stats(bx, problem)? {
        let r = (1.0 - stat.acceptance).clamp(0.0, 1.0);
        let miss = r.powf(copies as f64);
        let q = stat.cond_success.unwrap_or(0.5);
        total += stat.mu * ((1.0 - miss) * q + miss * abort_success(problem, stat.xi, stat.yi));
    }
    Ok(total)
}

impl PiBProtocol {
    pub fn k(&self) -> u32 {
        self.k
    }

    /// Abort probability target 2^-k.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Number of shared box instances, ceil(k / p_A).
    pub fn copies(&self) -> u64 {
        self.copies
    }

    /// Index bits plus the ABORT bit.
    pub fn message_bits(&self) -> u32 {
        self.message_bits
    }

    pub fn summary(&self) -> &BoxSummary {
        &self.summary
    }

    pub fn problem(&self) -> &CommProblem {
        &self.problem
    }

    pub fn correlation_box(&self) -> &CorrelationBox {
        &self.bx
    }

    /// Exact closed-form success of this protocol.
    pub fn exact_success(&self) -> f64 {
        exact_success_for_copies(&self.bx, &self.problem, self.copies)
            .expect("labels were resolved at compile time")
    }

    /// The averaged bound `(1-delta) p_B + delta/2`.
    pub fn guaranteed_success(&self) -> f64 {
        (1.0 - self.delta) * self.summary.p_b + self.delta / 2.0
    }

    /// The message bound in its ceiling form,
    /// `ceil(log2(1/p_A) + log2 log2(1/delta)) + 1`. Reported separately
    /// from [`Self::message_bits`]: the two agree when `k/p_A` is a power of
    /// two but may differ by one through the ceilings otherwise.
    pub fn ceiling_form_bits(&self) -> f64 {
        ceil_with_slack((1.0 / self.summary.p_a).log2() + (self.k as f64).log2()) + 1.0
    }

    /// Run the protocol `trials` times with seeded, chunked randomness.
    /// Identical seeds give identical results regardless of worker count.
    pub fn simulate(&self, trials: u64, seed: u64) -> Result<SimResult, PiBError> {
        if trials == 0 {
            return Err(PiBError::BadTrials);
        }
        let stats = pair_stats(&self.bx, &self.problem)?;
        // cumulative weights over the support for input sampling
        let mut cum = Vec::with_capacity(stats.len());
        let mut acc = 0.0;
        for s in &stats {
            acc += s.mu;
            cum.push(acc);
        }
        let total_mu = acc;

        let chunks = trials.div_ceil(SIM_CHUNK);
        let run_chunk = |chunk: u64| -> u64 {
            let lo = chunk * SIM_CHUNK;
            let hi = (lo + SIM_CHUNK).min(trials);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk + 1);
            let mut successes = 0u64;
            for _ in lo..hi {
                let u: f64 = rng.random::<f64>() * total_mu;
                let idx = cum.partition_point(|&c| c < u).min(stats.len() - 1);
                let s = &stats[idx];
                let valid = self.problem.valid(s.xi, s.yi);
                let cell = [
                    self.bx.prob(s.bxi, s.byi, false, false),
                    self.bx.prob(s.bxi, s.byi, false, true),
                    self.bx.prob(s.bxi, s.byi, true, false),
                    self.bx.prob(s.bxi, s.byi, true, true),
                ];
                let mut answered = false;
                for _ in 0..self.copies {
                    let v: f64 = rng.random();
                    let mut edge = cell[0];
                    let mut outcome = 0usize;
                    while outcome < 3 && v >= edge {
                        outcome += 1;
                        edge += cell[outcome];
                    }
                    if outcome >= 2 {
                        // Alice accepted; Bob answers his outcome bit
                        let b = outcome == 3;
                        if valid.contains(b) {
                            successes += 1;
                        }
                        answered = true;
                        break;
                    }
                }
                if !answered {
                    // ABORT: a fair coin answers
                    let coin: bool = rng.random();
                    if valid.contains(coin) {
                        successes += 1;
                    }
                }
            }
            successes
        };

        let successes: u64 = {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                (0..chunks).into_par_iter().map(run_chunk).sum()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..chunks).map(run_chunk).sum()
            }
        };
        let estimate = successes as f64 / trials as f64;
        let std_error = (estimate * (1.0 - estimate) / trials as f64).sqrt();
        Ok(SimResult {
            trials,
            successes,
            estimate,
            std_error,
        })
    }
}
