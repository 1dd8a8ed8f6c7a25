//! Bipartite correlation boxes p(a,b|x,y) with binary outcomes: summary
//! parameters, non-signaling verification, convex mixing, and membership
//! testing for the local polytope.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problems::{CommProblem, Label};
use crate::simplex::{self, LpOutcome};

/// Entries may dip this far below zero before the table is rejected.
pub const BOX_NEG_TOL: f64 = 1e-12;
/// Per-(x,y) normalization tolerance.
pub const BOX_NORM_TOL: f64 = 1e-9;
/// Acceptance probabilities at or below this make the conditional
/// success undefined; such pairs fall back to 1/2 and are reported.
pub const ACCEPTANCE_EPS: f64 = 1e-12;
/// Phase-1 residual at or below this certifies membership.
pub const LHV_FEASIBLE_TOL: f64 = 1e-9;
/// Infeasible verdicts with residual below this are flagged marginal.
pub const LHV_MARGINAL_TOL: f64 = 1e-7;
/// A membership certificate must reproduce the box this closely.
pub const LHV_RECONSTRUCTION_TOL: f64 = 1e-8;
/// Refuse membership tests with more than 2^24 deterministic strategy pairs.
pub const LHV_STRATEGY_GUARD_BITS: u32 = 24;

#[derive(Debug, Error)]
pub enum BoxError {
    #[error("labels must be nonempty and duplicate-free")]
    BadLabels,
    #[error("table must hold {expected} entries, got {got}")]
    BadShape { expected: usize, got: usize },
    #[error("negative entry {value} at (x={x}, y={y})")]
    NegativeEntry { x: Label, y: Label, value: f64 },
    #[error("outcomes at (x={x}, y={y}) sum to {sum}, not 1 within {BOX_NORM_TOL:.0e}")]
    NotNormalized { x: Label, y: Label, sum: f64 },
    #[error("label {0} not present in the box")]
    MissingLabel(Label),
    #[error("boxes must carry identical label sets")]
    LabelMismatch,
    #[error("mixing weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("invalid box document: {0}")]
    Document(String),
}

#[derive(Debug, Error)]
pub enum LhvError {
    #[error("{0}")]
    Box(#[from] BoxError),
    #[error("2^{x} * 2^{y} deterministic strategies exceed the 2^{LHV_STRATEGY_GUARD_BITS} guard")]
    Guard { x: usize, y: usize },
    #[error("linear program did not converge: {0}")]
    Numerical(String),
}

/// Conditional distribution of binary outcome pairs given one setting per
/// side. Entries are stored row-major as `[x][y][a][b]`.
///
/// Nonnegativity and per-setting normalization are enforced on
/// construction; non-signaling is checked on demand, never assumed.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationBox {
    x_labels: Vec<Label>,
    y_labels: Vec<Label>,
    p: Vec<f64>,
}

fn duplicate_free(labels: &[Label]) -> bool {
    let set: std::collections::BTreeSet<_> = labels.iter().collect();
    set.len() == labels.len()
}

impl CorrelationBox {
    pub fn new(x_labels: Vec<Label>, y_labels: Vec<Label>, p: Vec<f64>) -> Result<Self, BoxError> {
        if x_labels.is_empty()
            || y_labels.is_empty()
            || !duplicate_free(&x_labels)
            || !duplicate_free(&y_labels)
        {
            return Err(BoxError::BadLabels);
        }
        let expected = x_labels.len() * y_labels.len() * 4;
        if p.len() != expected {
            return Err(BoxError::BadShape {
                expected,
                got: p.len(),
            });
        }
        let ny = y_labels.len();
        for (cell, chunk) in p.chunks_exact(4).enumerate() {
            let (xi, yi) = (cell / ny, cell % ny);
            for &v in chunk {
                if v < -BOX_NEG_TOL {
                    return Err(BoxError::NegativeEntry {
                        x: x_labels[xi].clone(),
                        y: y_labels[yi].clone(),
                        value: v,
                    });
                }
            }
            let sum: f64 = chunk.iter().sum();
            if (sum - 1.0).abs() > BOX_NORM_TOL {
                return Err(BoxError::NotNormalized {
                    x: x_labels[xi].clone(),
                    y: y_labels[yi].clone(),
                    sum,
                });
            }
        }
        Ok(CorrelationBox {
            x_labels,
            y_labels,
            p,
        })
    }

    /// Box of a deterministic local strategy pair: Alice answers
    /// `alice[xi]`, Bob answers `bob[yi]`, independent of the other side.
    pub fn deterministic(
        x_labels: Vec<Label>,
        y_labels: Vec<Label>,
        alice: &[bool],
        bob: &[bool],
    ) -> Result<Self, BoxError> {
        if alice.len() != x_labels.len() || bob.len() != y_labels.len() {
            return Err(BoxError::BadShape {
                expected: x_labels.len() + y_labels.len(),
                got: alice.len() + bob.len(),
            });
        }
        let mut p = vec![0.0; x_labels.len() * y_labels.len() * 4];
        for (xi, &a) in alice.iter().enumerate() {
            for (yi, &b) in bob.iter().enumerate() {
                let idx = ((xi * y_labels.len() + yi) * 2 + usize::from(a)) * 2 + usize::from(b);
                p[idx] = 1.0;
            }
        }
        CorrelationBox::new(x_labels, y_labels, p)
    }

    /// The white-noise box: every outcome pair has probability 1/4.
    pub fn uniform(x_labels: Vec<Label>, y_labels: Vec<Label>) -> Result<Self, BoxError> {
        let n = x_labels.len() * y_labels.len() * 4;
        CorrelationBox::new(x_labels, y_labels, vec![0.25; n])
    }

    pub fn nx(&self) -> usize {
        self.x_labels.len()
    }

    pub fn ny(&self) -> usize {
        self.y_labels.len()
    }

    pub fn x_labels(&self) -> &[Label] {
        &self.x_labels
    }

    pub fn y_labels(&self) -> &[Label] {
        &self.y_labels
    }

    pub fn x_index(&self, label: &Label) -> Option<usize> {
        self.x_labels.iter().position(|l| l == label)
    }

    pub fn y_index(&self, label: &Label) -> Option<usize> {
        self.y_labels.iter().position(|l| l == label)
    }

    pub fn prob(&self, xi: usize, yi: usize, a: bool, b: bool) -> f64 {
        self.p[((xi * self.ny() + yi) * 2 + usize::from(a)) * 2 + usize::from(b)]
    }

    /// p(a=1|x,y).
    pub fn acceptance(&self, xi: usize, yi: usize) -> f64 {
        self.prob(xi, yi, true, false) + self.prob(xi, yi, true, true)
    }

    pub fn entries(&self) -> &[f64] {
        &self.p
    }

    /// Entrywise convex combination `w * self + (1-w) * other`.
    pub fn mix(&self, other: &CorrelationBox, w: f64) -> Result<CorrelationBox, BoxError> {
        if !(0.0..=1.0).contains(&w) {
            return Err(BoxError::WeightOutOfRange(w));
        }
        if self.x_labels != other.x_labels || self.y_labels != other.y_labels {
            return Err(BoxError::LabelMismatch);
        }
        let p = self
            .p
            .iter()
            .zip(&other.p)
            .map(|(&a, &b)| w * a + (1.0 - w) * b)
            .collect();
        CorrelationBox::new(self.x_labels.clone(), self.y_labels.clone(), p)
    }

    pub fn from_json(text: &str) -> Result<Self, BoxError> {
        let doc: BoxDoc =
            serde_json::from_str(text).map_err(|e| BoxError::Document(e.to_string()))?;
        let nx = doc.x.len();
        let ny = doc.y.len();
        if doc.p.len() != nx
            || doc.p.iter().any(|r| r.len() != ny)
            || doc
                .p
                .iter()
                .flatten()
                .any(|ab| ab.len() != 2 || ab[0].len() != 2 || ab[1].len() != 2)
        {
            return Err(BoxError::Document(format!(
                "p must be a [{nx}][{ny}][2][2] nested array"
            )));
        }
        let p = doc
            .p
            .iter()
            .flatten()
            .flat_map(|ab| [ab[0][0], ab[0][1], ab[1][0], ab[1][1]])
            .collect();
        CorrelationBox::new(doc.x, doc.y, p)
    }

    pub fn to_json(&self) -> String {
        let ny = self.ny();
        let p = self
            .p
            .chunks_exact(4)
            .map(|c| vec![vec![c[0], c[1]], vec![c[2], c[3]]])
            .collect::<Vec<_>>()
            .chunks(ny)
            .map(|row| row.to_vec())
            .collect();
        let doc = BoxDoc {
            x: self.x_labels.clone(),
            y: self.y_labels.clone(),
            p,
        };
        serde_json::to_string_pretty(&doc).expect("box document serializes")
    }
}

/// On-disk box schema: `p` is nested `[x][y][a][b]`.
#[derive(Serialize, Deserialize)]
struct BoxDoc {
    x: Vec<Label>,
    y: Vec<Label>,
    p: Vec<Vec<Vec<Vec<f64>>>>,
}

/// The two numbers the nonlinear inequalities consume: Alice's averaged
/// acceptance probability and Bob's conditional agreement with the problem
/// given acceptance.
#[derive(Debug, Clone, Serialize)]
pub struct BoxSummary {
    /// `sum mu(x,y) p(a=1|x,y)`.
    pub p_a: f64,
    /// `sum mu(x,y) p(b in valid(x,y) | x,y,a=1)`, with 1/2 substituted on
    /// pairs where acceptance never happens (those route through the ABORT
    /// branch of the compiled protocol, which answers with a fair coin).
    pub p_b: f64,
    /// Pairs whose conditional was undefined and replaced by 1/2.
    pub undefined_pairs: Vec<(Label, Label)>,
}

/// Per-pair view of a box against a problem's support.
#[derive(Debug, Clone)]
pub(crate) struct PairStat {
    /// Problem-side indices.
    pub xi: usize,
    pub yi: usize,
    /// Box-side indices for the same labels.
    pub bxi: usize,
    pub byi: usize,
    pub mu: f64,
    /// p(a=1|x,y).
    pub acceptance: f64,
    /// p(b in valid(x,y) | x,y,a=1); None when acceptance vanishes.
    pub cond_success: Option<f64>,
}

/// Resolve every support pair of `problem` inside `bx`.
pub(crate) fn pair_stats(
    bx: &CorrelationBox,
    problem: &CommProblem,
) -> Result<Vec<PairStat>, BoxError> {
    let mut out = Vec::new();
    for (xi, yi) in problem.support() {
        let xl = &problem.x_labels()[xi];
        let yl = &problem.y_labels()[yi];
        let bxi = bx
            .x_index(xl)
            .ok_or_else(|| BoxError::MissingLabel(xl.clone()))?;
        let byi = bx
            .y_index(yl)
            .ok_or_else(|| BoxError::MissingLabel(yl.clone()))?;
        let acc = bx.acceptance(bxi, byi);
        let cond_success = if acc > ACCEPTANCE_EPS {
            let valid = problem.valid(xi, yi);
            let mut good = 0.0;
            for b in [false, true] {
                if valid.contains(b) {
                    good += bx.prob(bxi, byi, true, b);
                }
            }
            Some(good / acc)
        } else {
            None
        };
        out.push(PairStat {
            xi,
            yi,
            bxi,
            byi,
            mu: problem.mu(xi, yi),
            acceptance: acc,
            cond_success,
        });
    }
    Ok(out)
}

/// Compute the summary parameters of a box against a problem. Box labels
/// must cover the problem support.
pub fn summarize(bx: &CorrelationBox, problem: &CommProblem) -> Result<BoxSummary, BoxError> {
    let mut p_a = 0.0;
    let mut p_b = 0.0;
    let mut undefined = Vec::new();
    for stat in pair_stats(bx, problem)? {
        p_a += stat.mu * stat.acceptance;
        p_b += stat.mu * stat.cond_success.unwrap_or(0.5);
        if stat.cond_success.is_none() {
            undefined.push((
                problem.x_labels()[stat.xi].clone(),
                problem.y_labels()[stat.yi].clone(),
            ));
        }
    }
    Ok(BoxSummary {
        p_a,
        p_b,
        undefined_pairs: undefined,
    })
}

/// Result of the marginal-independence check.
#[derive(Debug, Clone, Serialize)]
pub struct NonsignalingReport {
    /// Largest spread of Alice's outcome marginal across Bob's settings.
    pub max_dev_alice: f64,
    /// Largest spread of Bob's outcome marginal across Alice's settings.
    pub max_dev_bob: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Measure how far each side's outcome marginal moves with the remote
/// setting. Boxes compiled from tensor-product measurements pass at 1e-10.
pub fn check_nonsignaling(bx: &CorrelationBox, tol: f64) -> NonsignalingReport {
    let mut max_dev_alice = 0.0f64;
    for xi in 0..bx.nx() {
        for a in [false, true] {
            let margs: Vec<f64> = (0..bx.ny())
                .map(|yi| bx.prob(xi, yi, a, false) + bx.prob(xi, yi, a, true))
                .collect();
            let lo = margs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = margs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            max_dev_alice = max_dev_alice.max(hi - lo);
        }
    }
    let mut max_dev_bob = 0.0f64;
    for yi in 0..bx.ny() {
        for b in [false, true] {
            let margs: Vec<f64> = (0..bx.nx())
                .map(|xi| bx.prob(xi, yi, false, b) + bx.prob(xi, yi, true, b))
                .collect();
            let lo = margs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = margs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            max_dev_bob = max_dev_bob.max(hi - lo);
        }
    }
    NonsignalingReport {
        max_dev_alice,
        max_dev_bob,
        tol,
        pass: max_dev_alice <= tol && max_dev_bob <= tol,
    }
}

/// One deterministic local strategy pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LocalStrategy {
    pub alice: Vec<bool>,
    pub bob: Vec<bool>,
}

impl LocalStrategy {
    pub fn as_box(
        &self,
        x_labels: Vec<Label>,
        y_labels: Vec<Label>,
    ) -> Result<CorrelationBox, BoxError> {
        CorrelationBox::deterministic(x_labels, y_labels, &self.alice, &self.bob)
    }
}

/// A linear functional separating a box from the local polytope. For every
/// deterministic local box D, `coeffs . D + offset <= lhv_max`, while the
/// tested box evaluates to `value_on_box > lhv_max`.
#[derive(Debug, Clone, Serialize)]
pub struct SeparatingFunctional {
    /// Indexed like the box table `[x][y][a][b]`.
    pub coeffs: Vec<f64>,
    /// Constant term (dual of the total-weight constraint).
    pub offset: f64,
    pub value_on_box: f64,
    pub lhv_max: f64,
}

impl SeparatingFunctional {
    pub fn evaluate(&self, bx: &CorrelationBox) -> f64 {
        self.coeffs
            .iter()
            .zip(bx.entries())
            .map(|(c, p)| c * p)
            .sum::<f64>()
            + self.offset
    }
}

#[derive(Debug, Clone, Serialize)]
pub enum LhvVerdict {
    /// Explicit convex decomposition into deterministic local boxes.
    Feasible { weights: Vec<(LocalStrategy, f64)> },
    /// Explicit separating functional.
    Infeasible { functional: SeparatingFunctional },
}

#[derive(Debug, Clone, Serialize)]
pub struct LhvReport {
    pub verdict: LhvVerdict,
    /// Residual infeasibility mass of the phase-1 program; 0 within
    /// [`LHV_FEASIBLE_TOL`] means the box sits in the polytope.
    pub residual: f64,
    /// Set on infeasible verdicts whose residual is below
    /// [`LHV_MARGINAL_TOL`]: the verdict stands but should not be trusted
    /// to more than float accuracy.
    pub marginal: bool,
}

impl LhvReport {
    pub fn is_feasible(&self) -> bool {
        matches!(self.verdict, LhvVerdict::Feasible { .. })
    }
}

/// Decide whether a box is a convex combination of deterministic local
/// boxes, by phase-1 simplex over the (implicit) strategy columns.
///
/// Feasible verdicts return weights that reproduce the box entrywise within
/// [`LHV_RECONSTRUCTION_TOL`]; infeasible verdicts return a separating
/// functional whose polytope maximum is computed exactly by enumeration.
pub fn lhv_membership(bx: &CorrelationBox) -> Result<LhvReport, LhvError> {
    let (nx, ny) = (bx.nx(), bx.ny());
    if nx + ny > LHV_STRATEGY_GUARD_BITS as usize {
        return Err(LhvError::Guard { x: nx, y: ny });
    }
    let outcome = simplex::solve_lhv(nx, ny, bx.entries()).map_err(LhvError::Numerical)?;
    match outcome {
        LpOutcome::Feasible { weights, residual } => {
            let weights: Vec<(LocalStrategy, f64)> = weights
                .into_iter()
                .map(|(amask, bmask, w)| {
                    let alice = (0..nx).map(|i| (amask >> i) & 1 == 1).collect();
                    let bob = (0..ny).map(|i| (bmask >> i) & 1 == 1).collect();
                    (LocalStrategy { alice, bob }, w)
                })
                .collect();
            // replay the certificate before handing it out
            let mut recon = vec![0.0; bx.entries().len()];
            for (strat, w) in &weights {
                for (xi, &a) in strat.alice.iter().enumerate() {
                    for (yi, &b) in strat.bob.iter().enumerate() {
                        let idx = ((xi * ny + yi) * 2 + usize::from(a)) * 2 + usize::from(b);
                        recon[idx] += w;
                    }
                }
            }
            let err = recon
                .iter()
                .zip(bx.entries())
                .map(|(r, p)| (r - p).abs())
                .fold(0.0, f64::max);
            if err > LHV_RECONSTRUCTION_TOL {
                return Err(LhvError::Numerical(format!(
                    "certificate replay error {err:.3e} exceeds {LHV_RECONSTRUCTION_TOL:.0e}"
                )));
            }
            Ok(LhvReport {
                verdict: LhvVerdict::Feasible { weights },
                residual,
                marginal: false,
            })
        }
        LpOutcome::Infeasible { duals, residual } => {
            let m = duals.len();
            let coeffs = duals[..m - 1].to_vec();
            let offset = duals[m - 1];
            let value_on_box = coeffs
                .iter()
                .zip(bx.entries())
                .map(|(c, p)| c * p)
                .sum::<f64>()
                + offset;
            let lhv_max = simplex::max_over_strategies(nx, ny, &duals);
            let functional = SeparatingFunctional {
                coeffs,
                offset,
                value_on_box,
                lhv_max,
            };
            if functional.value_on_box <= functional.lhv_max {
                return Err(LhvError::Numerical(format!(
                    "separating functional fails to separate: {} <= {}",
                    functional.value_on_box, functional.lhv_max
                )));
            }
            Ok(LhvReport {
                verdict: LhvVerdict::Infeasible { functional },
                residual,
                marginal: residual < LHV_MARGINAL_TOL,
            })
        }
    }
}
