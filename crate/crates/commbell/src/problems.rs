//! Finite bipartite communication problems.
//!
//! A [`CommProblem`] is a pair of finite input sets, a valid-output relation
//! on input pairs, and a probability distribution over the pairs. Functions
//! are the singleton case of the relation; "don't care" pairs carry both
//! outputs.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Allowed drift of the input distribution away from total weight 1.
pub const MU_NORMALIZATION_TOL: f64 = 1e-9;

/// An input label, either an integer or a string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Int(i64),
    Str(String),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Int(v) => write!(f, "{v}"),
            Label::Str(s) => write!(f, "{s}"),
        }
    }
}

impl From<i64> for Label {
    fn from(v: i64) -> Self {
        Label::Int(v)
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::Str(s.to_owned())
    }
}

/// Subset of the binary outputs {0,1} accepted for one input pair.
///
/// Stored as a two-bit mask: bit 0 set means output 0 is accepted, bit 1 set
/// means output 1 is accepted. The empty set is representable but only legal
/// on pairs of zero weight.
#[derive(Debug, Copy, Clone, PartialEq, Eq)]
pub struct ValidSet(u8);

impl ValidSet {
    pub const EMPTY: ValidSet = ValidSet(0b00);
    pub const ONLY_ZERO: ValidSet = ValidSet(0b01);
    pub const ONLY_ONE: ValidSet = ValidSet(0b10);
    pub const ANY: ValidSet = ValidSet(0b11);

    /// The singleton set containing exactly `output`.
    pub fn only(output: bool) -> ValidSet {
        if output {
            ValidSet::ONLY_ONE
        } else {
            ValidSet::ONLY_ZERO
        }
    }

    pub fn contains(self, output: bool) -> bool {
        self.0 & (1 << u8::from(output)) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Set union; enlarging a valid set never hurts any strategy.
    pub fn union(self, other: ValidSet) -> ValidSet {
        ValidSet(self.0 | other.0)
    }
}

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("input labels must be nonempty and duplicate-free")]
    BadLabels,
    #[error("mu/valid tables must be |X| x |Y| = {expected} entries, got {got}")]
    BadShape { expected: usize, got: usize },
    #[error("negative weight mu({x},{y}) = {w}")]
    NegativeWeight { x: Label, y: Label, w: f64 },
    #[error("weights sum to {sum}, outside 1 +/- {MU_NORMALIZATION_TOL}")]
    NotNormalized { sum: f64 },
    #[error("empty valid set on weighted pair ({x},{y})")]
    EmptyValidOnSupport { x: Label, y: Label },
    #[error("strategy undefined on weighted pair ({x},{y})")]
    StrategyMissing { x: Label, y: Label },
    #[error("invalid problem document: {0}")]
    Document(String),
}

/// A finite bipartite problem: Alice holds `x`, Bob holds `y`, Bob must
/// produce an output in `valid(x,y)`, and pairs are drawn from `mu`.
///
/// Immutable after construction; shared freely between workers.
#[derive(Debug, Clone, PartialEq)]
pub struct CommProblem {
    x_labels: Vec<Label>,
    y_labels: Vec<Label>,
    /// Row-major: index `xi * ny + yi`.
    valid: Vec<ValidSet>,
    /// Row-major, renormalized to sum exactly 1.
    mu: Vec<f64>,
    /// Size label in bits, used for reporting and asymptotic formulas only.
    n: u32,
}

impl CommProblem {
    pub fn new(
        x_labels: Vec<Label>,
        y_labels: Vec<Label>,
        valid: Vec<ValidSet>,
        mu: Vec<f64>,
        n: u32,
    ) -> Result<Self, ProblemError> {
        if x_labels.is_empty() || y_labels.is_empty() {
            return Err(ProblemError::BadLabels);
        }
        if x_labels.iter().collect::<BTreeSet<_>>().len() != x_labels.len()
            || y_labels.iter().collect::<BTreeSet<_>>().len() != y_labels.len()
        {
            return Err(ProblemError::BadLabels);
        }
        let expected = x_labels.len() * y_labels.len();
        if valid.len() != expected {
            return Err(ProblemError::BadShape {
                expected,
                got: valid.len(),
            });
        }
        if mu.len() != expected {
            return Err(ProblemError::BadShape {
                expected,
                got: mu.len(),
            });
        }
        let ny = y_labels.len();
        for (idx, &w) in mu.iter().enumerate() {
            if w < 0.0 {
                return Err(ProblemError::NegativeWeight {
                    x: x_labels[idx / ny].clone(),
                    y: y_labels[idx % ny].clone(),
                    w,
                });
            }
        }
        let sum: f64 = mu.iter().sum();
        if (sum - 1.0).abs() > MU_NORMALIZATION_TOL {
            return Err(ProblemError::NotNormalized { sum });
        }
        let mu: Vec<f64> = mu.iter().map(|w| w / sum).collect();
        for (idx, v) in valid.iter().enumerate() {
            if mu[idx] > 0.0 && v.is_empty() {
                return Err(ProblemError::EmptyValidOnSupport {
                    x: x_labels[idx / ny].clone(),
                    y: y_labels[idx % ny].clone(),
                });
            }
        }
        Ok(CommProblem {
            x_labels,
            y_labels,
            valid,
            mu,
            n,
        })
    }

    /// The 2->1 random access code: Alice gets two bits, Bob asks for one of
    /// them. Labels are the bit strings `x1 x0` ("01" means x1=0, x0=1); Bob's
    /// question `y` selects bit `x_y`. Uniform weights 1/8, size label 2.
    pub fn rac21() -> Self {
        let x_labels: Vec<Label> = ["00", "01", "10", "11"].iter().map(|&s| s.into()).collect();
        let y_labels: Vec<Label> = vec![0.into(), 1.into()];
        let mut valid = Vec::with_capacity(8);
        for x in ["00", "01", "10", "11"] {
            let bits = x.as_bytes();
            let x1 = bits[0] == b'1';
            let x0 = bits[1] == b'1';
            valid.push(ValidSet::only(x0)); // y = 0 asks for x0
            valid.push(ValidSet::only(x1)); // y = 1 asks for x1
        }
        let mu = vec![0.125; 8];
        CommProblem::new(x_labels, y_labels, valid, mu, 2).expect("builtin problem is valid")
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

    /// Size label in bits.
    pub fn size_label(&self) -> u32 {
        self.n
    }

    pub fn mu(&self, xi: usize, yi: usize) -> f64 {
        self.mu[xi * self.ny() + yi]
    }

    pub fn valid(&self, xi: usize, yi: usize) -> ValidSet {
        self.valid[xi * self.ny() + yi]
    }

    pub fn x_index(&self, label: &Label) -> Option<usize> {
        self.x_labels.iter().position(|l| l == label)
    }

    pub fn y_index(&self, label: &Label) -> Option<usize> {
        self.y_labels.iter().position(|l| l == label)
    }

    /// Index pairs with positive weight, row-major order.
    pub fn support(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let ny = self.ny();
        self.mu
            .iter()
            .enumerate()
            .filter(|&(_, &w)| w > 0.0)
            .map(move |(idx, _)| (idx / ny, idx % ny))
    }

    /// Weighted success probability of a deterministic joint strategy.
    ///
    /// The strategy maps an input pair to Bob's output; `None` on a weighted
    /// pair is an error. Zero-weight pairs are never consulted.
    pub fn success_probability(
        &self,
        strategy: impl Fn(&Label, &Label) -> Option<bool>,
    ) -> Result<f64, ProblemError> {
        let mut total = 0.0;
        for (xi, yi) in self.support() {
            let out = strategy(&self.x_labels[xi], &self.y_labels[yi]).ok_or_else(|| {
                ProblemError::StrategyMissing {
                    x: self.x_labels[xi].clone(),
                    y: self.y_labels[yi].clone(),
                }
            })?;
            if self.valid(xi, yi).contains(out) {
                total += self.mu(xi, yi);
            }
        }
        Ok(total)
    }

    pub fn from_json(text: &str) -> Result<Self, ProblemError> {
        let doc: ProblemDoc =
            serde_json::from_str(text).map_err(|e| ProblemError::Document(e.to_string()))?;
        doc.try_into()
    }

    pub fn to_json(&self) -> String {
        let doc = ProblemDoc::from(self);
        serde_json::to_string_pretty(&doc).expect("problem document serializes")
    }
}

/// On-disk problem schema: `mu` and `valid` are row-major 2-D arrays with
/// row index = x and column index = y in declared label order; a `valid`
/// entry is 0, 1, or "any".
#[derive(Serialize, Deserialize)]
struct ProblemDoc {
    x: Vec<Label>,
    y: Vec<Label>,
    mu: Vec<Vec<f64>>,
    valid: Vec<Vec<ValidEntry>>,
    n: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ValidEntry {
    Bit(u8),
    Any(String),
}

impl TryFrom<ProblemDoc> for CommProblem {
    type Error = ProblemError;

    fn try_from(doc: ProblemDoc) -> Result<Self, ProblemError> {
        let nx = doc.x.len();
        let ny = doc.y.len();
        let flatten_rows = |rows: &[Vec<ValidEntry>]| -> Result<Vec<ValidSet>, ProblemError> {
            if rows.len() != nx || rows.iter().any(|r| r.len() != ny) {
                return Err(ProblemError::Document(format!(
                    "valid table must be {nx} rows of {ny} entries"
                )));
            }
            rows.iter()
                .flatten()
                .map(|e| match e {
                    ValidEntry::Bit(0) => Ok(ValidSet::ONLY_ZERO),
                    ValidEntry::Bit(1) => Ok(ValidSet::ONLY_ONE),
                    ValidEntry::Bit(v) => Err(ProblemError::Document(format!(
                        "valid entry {v} not 0|1|\"any\""
                    ))),
                    ValidEntry::Any(s) if s == "any" => Ok(ValidSet::ANY),
                    ValidEntry::Any(s) => Err(ProblemError::Document(format!(
                        "valid entry \"{s}\" not 0|1|\"any\""
                    ))),
                })
                .collect()
        };
        let valid = flatten_rows(&doc.valid)?;
        if doc.mu.len() != nx || doc.mu.iter().any(|r| r.len() != ny) {
            return Err(ProblemError::Document(format!(
                "mu table must be {nx} rows of {ny} entries"
            )));
        }
        let mu: Vec<f64> = doc.mu.into_iter().flatten().collect();
        CommProblem::new(doc.x, doc.y, valid, mu, doc.n)
    }
}

impl From<&CommProblem> for ProblemDoc {
    fn from(p: &CommProblem) -> Self {
        let ny = p.ny();
        let mu = p.mu.chunks(ny).map(|row| row.to_vec()).collect();
        let valid = p
            .valid
            .chunks(ny)
            .map(|row| {
                row.iter()
                    .map(|v| match *v {
                        ValidSet::ONLY_ZERO => ValidEntry::Bit(0),
                        ValidSet::ONLY_ONE => ValidEntry::Bit(1),
                        _ => ValidEntry::Any("any".to_owned()),
                    })
                    .collect()
            })
            .collect();
        ProblemDoc {
            x: p.x_labels.clone(),
            y: p.y_labels.clone(),
            mu,
            valid,
            n: p.n,
        }
    }
}
