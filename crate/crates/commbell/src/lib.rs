//! Communication complexity meets Bell nonlocality.
//!
//! This crate computes exact one-way distributional communication complexity
//! for small finite problems, compiles quantum one-way protocols into
//! bipartite correlation boxes, and evaluates nonlinear Bell inequalities on
//! those boxes: the ceiling-form inequality relating Alice's acceptance
//! probability to classical communication cost, its pumped variant, the
//! asymptotic vector-in-subspace and hidden-matching forms, and the random
//! access code success-probability inequality.
//!
//! The pipeline, end to end:
//!
//! 1. [`problems`] defines finite bipartite problems (functions and
//!    relations) with an input distribution.
//! 2. [`classical_cc`] finds the best deterministic one-way protocol for a
//!    given message budget by exhaustive search over encoder partitions.
//! 3. [`quantum`] simulates states and binary measurements, and turns a
//!    prepare-and-measure protocol into measurements on an entangled state.
//! 4. [`correlations`] holds the resulting conditional distributions
//!    p(a,b|x,y), their summary parameters, and a linear-programming test
//!    for membership in the local polytope.
//! 5. [`protocol_sim`] compiles any box into the index-of-first-acceptance
//!    classical protocol and validates its closed-form success probability
//!    by seeded Monte Carlo.
//! 6. [`bell`] evaluates the inequalities and computes noise-robustness
//!    thresholds.
//!
//! Inner loops (partition search, box compilation, Monte Carlo) run on
//! rayon when the default `parallel` feature is enabled and fall back to
//! sequential code without it. Both paths produce bit-identical results;
//! `benches/parallel_vs_seq.rs` compares them.

pub mod bell;
pub mod classical_cc;
pub mod correlations;
pub mod partitions;
pub mod problems;
pub mod protocol_sim;
pub mod quantum;

mod simplex;
