//! Finite-dimensional quantum states, binary measurements, and the
//! compilation of a prepare-and-measure protocol into a correlation box.
//!
//! The compilation replaces state transmission with measurements on a shared
//! entangled state: Bob keeps the protocol observable, Alice projects onto
//! the complex conjugate of the state she would have prepared. In the
//! computational basis this satisfies
//! `Tr[(|psi*><psi*| (x) M) PhiPlus] = <psi|M|psi> / d`,
//! so conditioned on Alice's acceptance Bob's side behaves as if the state
//! had been sent. That identity is verified numerically in the tests and the
//! acceptance suite before any compiled box is trusted.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::correlations::CorrelationBox;
use crate::problems::{CommProblem, Label};

pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
/// Eigenvalue slack for positivity checks; absorbs float error from mixing.
pub const PSD_TOL: f64 = 1e-9;
pub const STATE_NORM_TOL: f64 = 1e-10;
/// Dense matrices only: bipartite states at this local dimension are already
/// 4096 x 4096.
pub const MAX_LOCAL_DIM: usize = 64;

#[derive(Debug, Error)]
pub enum QuantumError {
    #[error("local dimension {0} outside 2..={MAX_LOCAL_DIM}")]
    DimOutOfRange(usize),
    #[error("mixing weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("matrix is {rows}x{cols}, expected {expected}x{expected}")]
    BadShape {
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("matrix deviates from Hermitian by {0:.3e}")]
    NotHermitian(f64),
    #[error("trace {0} is not 1 within {TRACE_TOL:.0e}")]
    BadTrace(f64),
    #[error("matrix has an eigenvalue below -{PSD_TOL:.0e}")]
    NotPositive,
    #[error("effect has an eigenvalue outside [-{PSD_TOL:.0e}, 1+{PSD_TOL:.0e}]")]
    EffectOutOfRange,
    #[error("state vector norm {0} is not 1 within {STATE_NORM_TOL:.0e}")]
    BadStateNorm(f64),
    #[error("Bloch vector norm {0} is not 1")]
    BadBlochNorm(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("a bipartite state is required here")]
    NotBipartite,
    #[error("protocol does not cover input {0}")]
    MissingInput(Label),
    #[error("declared success {0} outside [0, 1]")]
    BadDeclaredSuccess(f64),
    #[error("compiled table violates box invariants: {0}")]
    CompiledBox(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Locality {
    Local,
    Bipartite,
}

/// A density matrix, either on one system of dimension `d` or on two
/// (matrix side `d*d`), validated to be Hermitian, unit-trace, and positive
/// semidefinite within the module tolerances.
#[derive(Debug, Clone)]
pub struct QState {
    dim: usize,
    locality: Locality,
    rho: DMatrix<Complex64>,
}

fn hermiticity_deviation(m: &DMatrix<Complex64>) -> f64 {
    let adj = m.adjoint();
    (m - adj).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Positive semidefiniteness up to `-shift`: checks that `m + shift*I`
/// admits a Cholesky factorization with real positive pivots. Hand-rolled
/// because complex square roots always exist, so a generic complex Cholesky
/// cannot signal indefiniteness through the pivots.
fn is_psd_within(m: &DMatrix<Complex64>, shift: f64) -> bool {
    let n = m.nrows();
    let mut a = m.clone();
    for i in 0..n {
        a[(i, i)] += Complex64::new(shift, 0.0);
    }
    for k in 0..n {
        let pivot = a[(k, k)];
        if pivot.re <= 0.0 || pivot.im.abs() > HERMITICITY_TOL {
            return false;
        }
        let root = pivot.re.sqrt();
        for i in k + 1..n {
            a[(i, k)] /= Complex64::new(root, 0.0);
        }
        for j in k + 1..n {
            let ljk = a[(j, k)];
            for i in j..n {
                let lik = a[(i, k)];
                a[(i, j)] -= lik * ljk.conj();
            }
        }
    }
    true
}

impl QState {
    fn validate(
        dim: usize,
        locality: Locality,
        rho: DMatrix<Complex64>,
    ) -> Result<Self, QuantumError> {
        if !(2..=MAX_LOCAL_DIM).contains(&dim) {
            return Err(QuantumError::DimOutOfRange(dim));
        }
        let side = match locality {
            Locality::Local => dim,
            Locality::Bipartite => dim * dim,
        };
        if rho.nrows() != side || rho.ncols() != side {
            return Err(QuantumError::BadShape {
                rows: rho.nrows(),
                cols: rho.ncols(),
                expected: side,
            });
        }
        let dev = hermiticity_deviation(&rho);
        if dev > HERMITICITY_TOL {
            return Err(QuantumError::NotHermitian(dev));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(QuantumError::BadTrace(tr.re));
        }
        if !is_psd_within(&rho, PSD_TOL) {
            return Err(QuantumError::NotPositive);
        }
        Ok(QState { dim, locality, rho })
    }

    pub fn local(rho: DMatrix<Complex64>) -> Result<Self, QuantumError> {
        let dim = rho.nrows();
        QState::validate(dim, Locality::Local, rho)
    }

    pub fn bipartite(dim: usize, rho: DMatrix<Complex64>) -> Result<Self, QuantumError> {
        QState::validate(dim, Locality::Bipartite, rho)
    }

    /// Maximally entangled state `(1/sqrt(d)) sum_i |ii>` as a density
    /// matrix in the computational product basis.
    pub fn phi_plus(d: usize) -> Result<Self, QuantumError> {
        if !(2..=MAX_LOCAL_DIM).contains(&d) {
            return Err(QuantumError::DimOutOfRange(d));
        }
        let side = d * d;
        let mut rho = DMatrix::<Complex64>::zeros(side, side);
        let amp = Complex64::new(1.0 / d as f64, 0.0);
        for i in 0..d {
            for j in 0..d {
                rho[(i * d + i, j * d + j)] = amp;
            }
        }
        QState::validate(d, Locality::Bipartite, rho)
    }

    /// `p * PhiPlus + (1-p) * I/d^2`.
    pub fn isotropic(d: usize, p: f64) -> Result<Self, QuantumError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(QuantumError::WeightOutOfRange(p));
        }
        let phi = QState::phi_plus(d)?;
        let side = d * d;
        let mixed = DMatrix::<Complex64>::identity(side, side)
            * Complex64::new((1.0 - p) / side as f64, 0.0);
        let rho = phi.rho * Complex64::new(p, 0.0) + mixed;
        QState::validate(d, Locality::Bipartite, rho)
    }

    /// Two-qubit maximally entangled state mixed with white noise; the
    /// `d = 2` isotropic family.
    pub fn werner(p: f64) -> Result<Self, QuantumError> {
        QState::isotropic(2, p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn locality(&self) -> Locality {
        self.locality
    }

    pub fn rho(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }

    /// Partial trace over Bob's half.
    pub fn reduced_a(&self) -> Result<QState, QuantumError> {
        if self.locality != Locality::Bipartite {
            return Err(QuantumError::NotBipartite);
        }
        QState::local(partial_trace_b(&self.rho, self.dim))
    }

    /// Partial trace over Alice's half.
    pub fn reduced_b(&self) -> Result<QState, QuantumError> {
        if self.locality != Locality::Bipartite {
            return Err(QuantumError::NotBipartite);
        }
        QState::local(partial_trace_a(&self.rho, self.dim))
    }
}

/// Bipartite index convention: basis vector `|i,j>` sits at `i*d + j`
/// (Alice major). `pt_b[k,i] = sum_j rho[(k,j),(i,j)]`.
fn partial_trace_b(rho: &DMatrix<Complex64>, d: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(d, d, |k, i| {
        (0..d).map(|j| rho[(k * d + j, i * d + j)]).sum()
    })
}

fn partial_trace_a(rho: &DMatrix<Complex64>, d: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(d, d, |l, j| {
        (0..d).map(|i| rho[(i * d + l, i * d + j)]).sum()
    })
}

/// `Tr[(A (x) B) rho]` on a bipartite state, computed by contracting Bob's
/// side first; never materializes the Kronecker product.
pub fn kron_expectation(
    a: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
    state: &QState,
) -> Result<Complex64, QuantumError> {
    if state.locality != Locality::Bipartite {
        return Err(QuantumError::NotBipartite);
    }
    let d = state.dim;
    if a.nrows() != d || a.ncols() != d {
        return Err(QuantumError::DimMismatch(a.nrows(), d));
    }
    if b.nrows() != d || b.ncols() != d {
        return Err(QuantumError::DimMismatch(b.nrows(), d));
    }
    let m = contract_bob(b, &state.rho, d);
    Ok((0..d)
        .flat_map(|i| (0..d).map(move |k| (i, k)))
        .map(|(i, k)| a[(i, k)] * m[(k, i)])
        .sum())
}

/// `m[k,i] = sum_{j,l} B[j,l] * rho[(k,l),(i,j)]`, so that
/// `Tr[(A (x) B) rho] = sum_{i,k} A[i,k] * m[k,i]`.
fn contract_bob(b: &DMatrix<Complex64>, rho: &DMatrix<Complex64>, d: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(d, d, |k, i| {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..d {
            for l in 0..d {
                acc += b[(j, l)] * rho[(k * d + l, i * d + j)];
            }
        }
        acc
    })
}

/// A binary POVM given by its outcome-1 effect; outcome 0 is the complement.
#[derive(Debug, Clone)]
pub struct BinaryMeasurement {
    effect1: DMatrix<Complex64>,
}

impl BinaryMeasurement {
    pub fn new(effect1: DMatrix<Complex64>) -> Result<Self, QuantumError> {
        let n = effect1.nrows();
        if !(2..=MAX_LOCAL_DIM).contains(&n) || effect1.ncols() != n {
            return Err(QuantumError::BadShape {
                rows: effect1.nrows(),
                cols: effect1.ncols(),
                expected: n,
            });
        }
        let dev = hermiticity_deviation(&effect1);
        if dev > HERMITICITY_TOL {
            return Err(QuantumError::NotHermitian(dev));
        }
        // 0 <= E <= I within the eigenvalue slack
        if !is_psd_within(&effect1, PSD_TOL) {
            return Err(QuantumError::EffectOutOfRange);
        }
        let complement = DMatrix::<Complex64>::identity(n, n) - &effect1;
        if !is_psd_within(&complement, PSD_TOL) {
            return Err(QuantumError::EffectOutOfRange);
        }
        Ok(BinaryMeasurement { effect1 })
    }

    /// Rank-one projective measurement onto `psi`.
    pub fn projector_onto(psi: &DVector<Complex64>) -> Result<Self, QuantumError> {
        let nrm = psi.norm();
        if (nrm - 1.0).abs() > STATE_NORM_TOL {
            return Err(QuantumError::BadStateNorm(nrm));
        }
        BinaryMeasurement::new(psi * psi.adjoint())
    }

    /// Qubit projector onto the +1 eigenstate along a unit Bloch vector:
    /// `(I + n . sigma) / 2`.
    pub fn projector_from_bloch(n: [f64; 3]) -> Result<Self, QuantumError> {
        let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(QuantumError::BadBlochNorm(norm));
        }
        let e = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new((1.0 + n[2]) / 2.0, 0.0),
                Complex64::new(n[0] / 2.0, -n[1] / 2.0),
                Complex64::new(n[0] / 2.0, n[1] / 2.0),
                Complex64::new((1.0 - n[2]) / 2.0, 0.0),
            ],
        );
        BinaryMeasurement::new(e)
    }

    pub fn dim(&self) -> usize {
        self.effect1.nrows()
    }

    pub fn effect(&self, outcome: bool) -> DMatrix<Complex64> {
        if outcome {
            self.effect1.clone()
        } else {
            DMatrix::identity(self.dim(), self.dim()) - &self.effect1
        }
    }

    pub fn effect1(&self) -> &DMatrix<Complex64> {
        &self.effect1
    }
}

/// A one-way prepare-and-measure protocol: Alice sends `psi_x`, Bob measures
/// the binary observable for his input `y` and decodes from the outcome.
#[derive(Debug, Clone)]
pub struct QuantumProtocol {
    dim: usize,
    states: BTreeMap<Label, DVector<Complex64>>,
    measurements: BTreeMap<Label, BinaryMeasurement>,
    declared_success: f64,
}

impl QuantumProtocol {
    pub fn new(
        dim: usize,
        states: BTreeMap<Label, DVector<Complex64>>,
        measurements: BTreeMap<Label, BinaryMeasurement>,
        declared_success: f64,
    ) -> Result<Self, QuantumError> {
        if !(2..=MAX_LOCAL_DIM).contains(&dim) {
            return Err(QuantumError::DimOutOfRange(dim));
        }
        if !(0.0..=1.0).contains(&declared_success) {
            return Err(QuantumError::BadDeclaredSuccess(declared_success));
        }
        for psi in states.values() {
            if psi.len() != dim {
                return Err(QuantumError::DimMismatch(psi.len(), dim));
            }
            let nrm = psi.norm();
            if (nrm - 1.0).abs() > STATE_NORM_TOL {
                return Err(QuantumError::BadStateNorm(nrm));
            }
        }
        for meas in measurements.values() {
            if meas.dim() != dim {
                return Err(QuantumError::DimMismatch(meas.dim(), dim));
            }
        }
        Ok(QuantumProtocol {
            dim,
            states,
            measurements,
            declared_success,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Message size in qubits; fractional when the dimension is not a power
    /// of two.
    pub fn qbits(&self) -> f64 {
        (self.dim as f64).log2()
    }

    pub fn declared_success(&self) -> f64 {
        self.declared_success
    }

    pub fn state(&self, x: &Label) -> Option<&DVector<Complex64>> {
        self.states.get(x)
    }

    pub fn measurement(&self, y: &Label) -> Option<&BinaryMeasurement> {
        self.measurements.get(y)
    }

    /// The qubit protocol for the 2->1 random access code. Alice's states
    /// sit on the Bloch equator at `((-1)^x0, (-1)^x1, 0)/sqrt(2)`; Bob's
    /// observable for `y` lies along the x (y=0) or y (y=1) axis, with
    /// outcome 1 on the positive axis. That outcome orientation is the one
    /// under which the compiled box attains the declared success
    /// `cos^2(pi/8)` in the parity-decoded success sum; the opposite
    /// orientation is checked in tests.
    pub fn rac() -> Self {
        let inv = 1.0 / 2f64.sqrt();
        let mut states = BTreeMap::new();
        for label in ["00", "01", "10", "11"] {
            let bits = label.as_bytes();
            let x1 = bits[0] == b'1';
            let x0 = bits[1] == b'1';
            let nx = if x0 { -inv } else { inv };
            let ny = if x1 { -inv } else { inv };
            let phase = ny.atan2(nx);
            let psi = DVector::from_vec(vec![
                Complex64::new(inv, 0.0),
                Complex64::from_polar(inv, phase),
            ]);
            states.insert(Label::from(label), psi);
        }
        let mut measurements = BTreeMap::new();
        measurements.insert(
            Label::Int(0),
            BinaryMeasurement::projector_from_bloch([1.0, 0.0, 0.0]).expect("unit Bloch"),
        );
        measurements.insert(
            Label::Int(1),
            BinaryMeasurement::projector_from_bloch([0.0, 1.0, 0.0]).expect("unit Bloch"),
        );
        let declared = (FRAC_PI_4 / 2.0).cos().powi(2);
        QuantumProtocol::new(2, states, measurements, declared).expect("builtin protocol is valid")
    }
}

/// Zero out float dust; anything below the box nonnegativity tolerance is
/// left for validation to reject.
fn clamp_dust(v: f64) -> f64 {
    if (-1e-12..0.0).contains(&v) {
        0.0
    } else {
        v
    }
}

/// One cell of the compiled box: the four outcome probabilities for a fixed
/// setting pair, derived from the joint (1,1) value and the two marginals.
fn cell_probabilities(
    psi: &DVector<Complex64>,
    m_y: &DMatrix<Complex64>,
    pt_b: &DMatrix<Complex64>,
    t_b: f64,
    d: usize,
) -> [f64; 4] {
    // Alice's acceptance effect is |psi*><psi*|; its (i,k) entry is
    // conj(psi_i) * psi_k, so contraction never builds the matrix.
    let mut t11 = Complex64::new(0.0, 0.0);
    let mut ta = Complex64::new(0.0, 0.0);
    for i in 0..d {
        for k in 0..d {
            let a_ik = psi[i].conj() * psi[k];
            t11 += a_ik * m_y[(k, i)];
            ta += a_ik * pt_b[(k, i)];
        }
    }
    let p11 = t11.re;
    let pa = ta.re;
    [
        clamp_dust(1.0 - pa - t_b + p11),
        clamp_dust(t_b - p11),
        clamp_dust(pa - p11),
        clamp_dust(p11),
    ]
}

/// Compile a protocol and a shared bipartite state into the correlation box
/// `p(a,b|x,y) = Tr[(E_x^a (x) E_y^b) rho]` with `E_x^1 = |psi_x*><psi_x*|`
/// and `E_y^1` the protocol effect. Affine in the state, and non-signaling
/// by construction.
pub fn box_from_protocol(
    protocol: &QuantumProtocol,
    state: &QState,
    problem: &CommProblem,
) -> Result<CorrelationBox, QuantumError> {
    if state.locality() != Locality::Bipartite {
        return Err(QuantumError::NotBipartite);
    }
    let d = protocol.dim();
    if state.dim() != d {
        return Err(QuantumError::DimMismatch(state.dim(), d));
    }
    for x in problem.x_labels() {
        if protocol.state(x).is_none() {
            return Err(QuantumError::MissingInput(x.clone()));
        }
    }
    for y in problem.y_labels() {
        if protocol.measurement(y).is_none() {
            return Err(QuantumError::MissingInput(y.clone()));
        }
    }
    let rho = state.rho();
    let pt_b = partial_trace_b(rho, d);
    let pt_a = partial_trace_a(rho, d);

    // Bob-side contractions are shared across all x for a given y.
    let per_y: Vec<(DMatrix<Complex64>, f64)> = {
        let build = |y: &Label| {
            let b1 = protocol.measurement(y).expect("checked above").effect1();
            let m = contract_bob(b1, rho, d);
            let t_b: Complex64 = (0..d)
                .flat_map(|j| (0..d).map(move |l| (j, l)))
                .map(|(j, l)| b1[(j, l)] * pt_a[(l, j)])
                .sum();
            (m, t_b.re)
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            problem.y_labels().par_iter().map(build).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            problem.y_labels().iter().map(build).collect()
        }
    };

    let ny = problem.ny();
    let cell = |xi: usize, yi: usize| {
        let psi = protocol
            .state(&problem.x_labels()[xi])
            .expect("checked above");
        let (m_y, t_b) = &per_y[yi];
        cell_probabilities(psi, m_y, &pt_b, *t_b, d)
    };
    let cells: Vec<[f64; 4]> = {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            (0..problem.nx() * ny)
                .into_par_iter()
                .map(|idx| cell(idx / ny, idx % ny))
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..problem.nx() * ny)
                .map(|idx| cell(idx / ny, idx % ny))
                .collect()
        }
    };

    let mut p = Vec::with_capacity(cells.len() * 4);
    for c in cells {
        // table order per cell is (a,b) = (0,0),(0,1),(1,0),(1,1)
        p.extend_from_slice(&c);
    }
    CorrelationBox::new(problem.x_labels().to_vec(), problem.y_labels().to_vec(), p)
        .map_err(|e| QuantumError::CompiledBox(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng, d: usize) -> DVector<Complex64> {
        let mut v = DVector::from_fn(d, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let nrm = v.norm();
        v /= Complex64::new(nrm, 0.0);
        v
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<Complex64> {
        let m = DMatrix::from_fn(d, d, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        (&m + m.adjoint()) * Complex64::new(0.5, 0.0)
    }

    #[test]
    fn phi_plus_basics() {
        let phi = QState::phi_plus(2).unwrap();
        // <00|rho|11> = 1/2
        assert_abs_diff_eq!(phi.rho()[(0, 3)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(phi.rho().trace().re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(phi.purity(), 1.0, epsilon = 1e-12);
        for d in [2usize, 3, 4] {
            let phi = QState::phi_plus(d).unwrap();
            let ra = phi.reduced_a().unwrap();
            let rb = phi.reduced_b().unwrap();
            for i in 0..d {
                for j in 0..d {
                    let expect = if i == j { 1.0 / d as f64 } else { 0.0 };
                    assert_abs_diff_eq!(ra.rho()[(i, j)].re, expect, epsilon = 1e-12);
                    assert_abs_diff_eq!(rb.rho()[(i, j)].re, expect, epsilon = 1e-12);
                    assert_abs_diff_eq!(ra.rho()[(i, j)].im, 0.0, epsilon = 1e-12);
                }
            }
        }
        assert!(QState::phi_plus(1).is_err());
    }

    #[test]
    fn isotropic_family() {
        let d = 3;
        let pure = QState::isotropic(d, 1.0).unwrap();
        let phi = QState::phi_plus(d).unwrap();
        assert!((pure.rho() - phi.rho()).iter().all(|z| z.norm() < 1e-14));

        let mixed = QState::isotropic(d, 0.0).unwrap();
        for i in 0..d * d {
            assert_abs_diff_eq!(
                mixed.rho()[(i, i)].re,
                1.0 / (d * d) as f64,
                epsilon = 1e-14
            );
        }

        // entrywise convexity
        let p = 0.37;
        let iso = QState::isotropic(d, p).unwrap();
        for i in 0..d * d {
            for j in 0..d * d {
                let expect = pure.rho()[(i, j)] * Complex64::new(p, 0.0)
                    + mixed.rho()[(i, j)] * Complex64::new(1.0 - p, 0.0);
                assert!((iso.rho()[(i, j)] - expect).norm() < 1e-14);
            }
        }
        assert!(QState::isotropic(2, -0.1).is_err());
        assert!(QState::isotropic(2, 1.1).is_err());
    }

    #[test]
    fn werner_is_the_qubit_isotropic_state() {
        for p in [0.0, 0.3, 1.0] {
            let w = QState::werner(p).unwrap();
            let iso = QState::isotropic(2, p).unwrap();
            assert!((w.rho() - iso.rho()).iter().all(|z| z.norm() < 1e-15));
        }
    }

    #[test]
    fn remote_preparation_identity() {
        // Tr[(|psi*><psi*| (x) M) PhiPlus] = <psi|M|psi>/d, against a
        // literal Kronecker-product evaluation as an independent route.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [2usize, 4, 8] {
            let phi = QState::phi_plus(d).unwrap();
            for _ in 0..20 {
                let psi = random_state(&mut rng, d);
                let m = random_hermitian(&mut rng, d);
                let proj_conj = {
                    let c = psi.map(|z| z.conj());
                    &c * c.adjoint()
                };
                let fast = kron_expectation(&proj_conj, &m, &phi).unwrap();
                let dense = (proj_conj.kronecker(&m) * phi.rho()).trace();
                let expected = (psi.adjoint() * &m * &psi)[(0, 0)] / Complex64::new(d as f64, 0.0);
                assert!((fast - expected).norm() < 1e-10, "d={d}");
                assert!((fast - dense).norm() < 1e-12, "d={d}");
            }
        }
    }

    #[test]
    fn measurement_validation() {
        // projector is a valid effect
        let psi = DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        assert!(BinaryMeasurement::projector_onto(&psi).is_ok());
        // a matrix with eigenvalue 2 is not
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(2.0, 0.0),
            Complex64::new(0.0, 0.0),
        ]));
        assert!(matches!(
            BinaryMeasurement::new(bad),
            Err(QuantumError::EffectOutOfRange)
        ));
        // non-unit Bloch vector rejected
        assert!(BinaryMeasurement::projector_from_bloch([0.5, 0.0, 0.0]).is_err());
    }

    #[test]
    fn rac_protocol_geometry() {
        let proto = QuantumProtocol::rac();
        assert_eq!(proto.dim(), 2);
        assert_abs_diff_eq!(proto.qbits(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            proto.declared_success(),
            (2.0 + 2f64.sqrt()) / 4.0,
            epsilon = 1e-15
        );
        // pairwise overlaps |<psi|psi'>|^2 are 0 (antipodal) or 1/2
        let labels = ["00", "01", "10", "11"];
        for (i, a) in labels.iter().enumerate() {
            for b in labels.iter().skip(i + 1) {
                let pa = proto.state(&Label::from(*a)).unwrap();
                let pb = proto.state(&Label::from(*b)).unwrap();
                let ovl = (pa.adjoint() * pb)[(0, 0)].norm_sqr();
                let antipodal = (ovl - 0.0).abs() < 1e-12;
                let oblique = (ovl - 0.5).abs() < 1e-12;
                assert!(antipodal || oblique, "overlap {ovl} for {a},{b}");
            }
        }
    }
}
