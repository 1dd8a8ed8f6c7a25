//! Acceptance suite: the end-to-end checks the artifact must pass, one
//! criterion per test, each printing a single PASS/FAIL line (visible under
//! `cargo test --test acceptance -- --nocapture`).

use std::collections::BTreeMap;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use commbell::bell::{
    self, isotropic_noise_scaling, isotropic_vsp_detects, vsp_crossover, vsp_curves,
    AdvantageRegion, AsymptoticConstants, RhsSource,
};
use commbell::classical_cc::{optimal_success, pumped_bound, repetitions_needed};
use commbell::correlations::{lhv_membership, summarize, CorrelationBox, LhvVerdict};
use commbell::problems::{CommProblem, Label, ValidSet};
use commbell::protocol_sim;
use commbell::quantum::{
    box_from_protocol, kron_expectation, BinaryMeasurement, QState, QuantumProtocol,
};

const COS2_PI_8: f64 = (2.0 + std::f64::consts::SQRT_2) / 4.0;

fn check(number: u32, name: &str, body: impl FnOnce()) {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(()) => println!("ACCEPTANCE {number:02} {name}: PASS"),
        Err(cause) => {
            println!("ACCEPTANCE {number:02} {name}: FAIL");
            resume_unwind(cause);
        }
    }
}

fn quantum_rac_box() -> (CorrelationBox, CommProblem) {
    let problem = CommProblem::rac21();
    let bx = box_from_protocol(
        &QuantumProtocol::rac(),
        &QState::phi_plus(2).unwrap(),
        &problem,
    )
    .unwrap();
    (bx, problem)
}

#[test]
fn criterion_01_rac_classical_bound() {
    check(
        1,
        "exhaustive one-bit optimum on the access code is 3/4",
        || {
            let started = Instant::now();
            let value = optimal_success(&CommProblem::rac21(), 1).unwrap();
            assert!(started.elapsed().as_secs_f64() < 1.0);
            assert!((value - 0.75).abs() <= 1e-12, "value {value}");
        },
    );
}

#[test]
fn criterion_02_rac_quantum_value() {
    check(
        2,
        "compiled box attains cos^2(pi/8) with acceptance 1/2",
        || {
            let (bx, problem) = quantum_rac_box();
            let report = bell::rac_inequality(&bx).unwrap();
            assert!(
                (report.value - COS2_PI_8).abs() <= 1e-9,
                "value {}",
                report.value
            );
            assert!(report.violated);
            let summary = summarize(&bx, &problem).unwrap();
            assert!((summary.p_a - 0.5).abs() <= 1e-10, "p_a {}", summary.p_a);
        },
    );
}

#[test]
fn criterion_03_werner_threshold() {
    check(
        3,
        "isotropic-noise threshold of the access-code test is 1/sqrt(2)",
        || {
            let p_star = bell::noise_threshold(
                &QuantumProtocol::rac(),
                &CommProblem::rac21(),
                &bell::Inequality::Rac,
                1e-7,
            )
            .unwrap()
            .expect("the noiseless box violates");
            assert!(
                (p_star - std::f64::consts::FRAC_1_SQRT_2).abs() <= 1e-6,
                "threshold {p_star}"
            );
        },
    );
}

#[test]
fn criterion_04_lhv_soundness() {
    check(
        4,
        "local boxes are members and never flagged; the quantum box is certified out",
        || {
            let problem = CommProblem::rac21();
            let (xl, yl) = (problem.x_labels().to_vec(), problem.y_labels().to_vec());
            let grid = bell::default_delta_grid();

            let mut deterministic = Vec::new();
            for amask in 0..16u32 {
                for bmask in 0..4u32 {
                    let alice: Vec<bool> = (0..4).map(|i| (amask >> i) & 1 == 1).collect();
                    let bob: Vec<bool> = (0..2).map(|i| (bmask >> i) & 1 == 1).collect();
                    deterministic.push(
                        CorrelationBox::deterministic(xl.clone(), yl.clone(), &alice, &bob)
                            .unwrap(),
                    );
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(2024);
            let mut candidates = deterministic.clone();
            for _ in 0..1000 {
                // random convex combination of a few deterministic boxes
                let k = 2 + (rng.random::<u32>() % 4) as usize;
                let mut weights: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
                let total: f64 = weights.iter().sum();
                for w in &mut weights {
                    *w /= total;
                }
                let mut bx: Option<CorrelationBox> = None;
                let mut used = 0.0;
                for (i, &w) in weights.iter().enumerate() {
                    let pick =
                        &deterministic[(rng.random::<u32>() as usize + i) % deterministic.len()];
                    bx = Some(match bx {
                        None => pick.clone(),
                        Some(acc) => {
                            // fold the new component in with its conditional weight
                            let lambda = w / (used + w);
                            pick.mix(&acc, lambda).unwrap()
                        }
                    });
                    used += w;
                }
                candidates.push(bx.unwrap());
            }

            for bx in &candidates {
                let membership = lhv_membership(bx).unwrap();
                assert!(membership.is_feasible());
                assert!(bell::rac_inequality(bx).unwrap().value <= 0.75 + 1e-9);
                let summary = summarize(bx, &problem).unwrap();
                let report =
                    bell::evaluate(&summary, &problem, &grid, &RhsSource::ExactSearch).unwrap();
                assert!(!report.violated);
            }

            let (qbox, _) = quantum_rac_box();
            let membership = lhv_membership(&qbox).unwrap();
            assert!(!membership.is_feasible());
            let LhvVerdict::Infeasible { functional } = &membership.verdict else {
                panic!("expected a separating certificate");
            };
            assert!(functional.value_on_box > functional.lhv_max + 1e-9);
            for det in &deterministic {
                assert!(functional.evaluate(det) <= functional.lhv_max + 1e-9);
            }
        },
    );
}

#[test]
fn criterion_05_indexing_protocol_consistency() {
    check(
        5,
        "closed form matches the averaged expression and the Monte Carlo run",
        || {
            let (qbox, problem) = quantum_rac_box();

            // constant acceptance: the per-pair form collapses to
            // (1 - delta') p_B + delta'/2 with delta' = (1 - p_A)^N
            for k in 1..=3 {
                let proto = protocol_sim::compile(&qbox, &problem, k).unwrap();
                let summary = proto.summary();
                let delta_eff = (1.0 - summary.p_a).powf(proto.copies() as f64);
                let collapsed = (1.0 - delta_eff) * summary.p_b + delta_eff / 2.0;
                assert!((proto.exact_success() - collapsed).abs() <= 1e-12);
            }

            // the averaged bound is dominated once the conditional success is
            // at least 1/2 (flip Bob's outcome orientation to get the
            // conditional-success form of the same correlations)
            let flipped = {
                let base = QuantumProtocol::rac();
                let mut states = BTreeMap::new();
                for l in ["00", "01", "10", "11"] {
                    let l = Label::from(l);
                    states.insert(l.clone(), base.state(&l).unwrap().clone());
                }
                let mut measurements = BTreeMap::new();
                measurements.insert(
                    Label::Int(0),
                    BinaryMeasurement::projector_from_bloch([-1.0, 0.0, 0.0]).unwrap(),
                );
                measurements.insert(
                    Label::Int(1),
                    BinaryMeasurement::projector_from_bloch([0.0, -1.0, 0.0]).unwrap(),
                );
                QuantumProtocol::new(2, states, measurements, base.declared_success()).unwrap()
            };
            let good_box =
                box_from_protocol(&flipped, &QState::phi_plus(2).unwrap(), &problem).unwrap();
            for k in 1..=3 {
                let proto = protocol_sim::compile(&good_box, &problem, k).unwrap();
                assert!(proto.summary().p_b >= 0.5);
                assert!(proto.exact_success() >= proto.guaranteed_success() - 1e-12);
            }

            // seeded Monte Carlo agrees with the closed form at a million trials
            let proto = protocol_sim::compile(&qbox, &problem, 1).unwrap();
            let sim = proto.simulate(1_000_000, 20240817).unwrap();
            let exact = proto.exact_success();
            assert!(
                (sim.estimate - exact).abs() <= 4.0 * sim.std_error,
                "estimate {} vs exact {exact} (stderr {})",
                sim.estimate,
                sim.std_error
            );
        },
    );
}

#[test]
fn criterion_06_pumping() {
    check(
        6,
        "repetition count and pumped bound carry the 1/108 factor",
        || {
            assert_eq!(repetitions_needed(1.0 / 6.0).unwrap(), 108);
            for c in [1.0, 54.0, 108.0, 1000.0] {
                assert!((pumped_bound(c, 2.0 / 3.0) - c / 108.0).abs() <= 1e-12 * c.max(1.0));
            }
        },
    );
}

#[test]
fn criterion_07_isotropic_linearity() {
    check(
        7,
        "conditional success interpolates linearly under isotropic noise",
        || {
            for d in [2usize, 4] {
                let (protocol, problem) = parity_protocol(d);
                for p in [0.0, 0.25, 0.5, 0.75, 1.0] {
                    let bx =
                        box_from_protocol(&protocol, &QState::isotropic(d, p).unwrap(), &problem)
                            .unwrap();
                    let summary = summarize(&bx, &problem).unwrap();
                    assert!(
                        (summary.p_b - (p / 2.0 + 0.5)).abs() <= 1e-9,
                        "d={d} p={p} p_b={}",
                        summary.p_b
                    );
                }
            }
        },
    );
}

#[test]
fn criterion_08_boundary_curves() {
    check(
        8,
        "boundary sits at or below the complexity curve with three regions",
        || {
            let constants = AsymptoticConstants::default();
            let n = 10_000;
            let grid: Vec<f64> = (0..100).map(|i| 0.5 + 0.5 * i as f64 / 99.0).collect();
            let rows = vsp_curves(n, &constants, &grid).unwrap();
            assert_eq!(rows.len(), 100);
            for w in rows.windows(2) {
                assert!(w[1].cc_bound >= w[0].cc_bound - 1e-12);
                assert!(w[1].boundary >= w[0].boundary - 1e-12);
            }
            for row in &rows {
                assert!(row.boundary <= row.cc_bound + 1e-12, "p_b {}", row.p_b);
            }
            // all three regions are realized and classified
            let sample = rows
                .iter()
                .find(|r| r.boundary > 0.5)
                .expect("nonempty detected region");
            assert_eq!(
                bell::classify_point(sample.boundary / 2.0, sample.p_b, n, &constants).unwrap(),
                AdvantageRegion::BellDetected
            );
            let gap_row = rows
                .iter()
                .find(|r| r.cc_bound - r.boundary > 0.5)
                .expect("nonempty middle region");
            assert_eq!(
                bell::classify_point(
                    (gap_row.boundary + gap_row.cc_bound) / 2.0,
                    gap_row.p_b,
                    n,
                    &constants
                )
                .unwrap(),
                AdvantageRegion::UndetectedAdvantage
            );
            assert_eq!(
                bell::classify_point(rows[99].cc_bound + 1.0, rows[99].p_b, n, &constants).unwrap(),
                AdvantageRegion::Classical
            );
        },
    );
}

#[test]
fn criterion_09_asymptotic_crossover_and_isotropic_chain() {
    check(
        9,
        "crossover size exists, is stable, and the noise chain stays detected",
        || {
            let started = Instant::now();
            let constants = AsymptoticConstants::default();
            let delta = 0.01;

            let n_star = vsp_crossover(1.0, delta, &constants, 1_000_000_000_000)
                .unwrap()
                .expect("crossover exists");
            let flip = |n: u64| {
                bell::asymptotic_vsp(n, 1.0, delta, &constants)
                    .unwrap()
                    .violated
            };
            assert!(!flip(n_star - 1) && flip(n_star));

            // stability against the scan granularity: the exact crossover sits
            // inside the last doubling step
            let mut p2 = 2u64;
            while !flip(p2) {
                p2 *= 2;
            }
            assert!(n_star <= p2 && n_star > p2 / 2);

            // stability against delta-grid refinement: allowing the best delta
            // from refined grids moves the crossover by less than one doubling
            for refined in [
                vec![0.005, 0.01, 0.02],
                vec![0.004, 0.008, 0.01, 0.016, 0.032],
            ] {
                let flip_grid = |n: u64| {
                    refined.iter().any(|&d| {
                        bell::asymptotic_vsp(n, 1.0, d, &constants)
                            .unwrap()
                            .violated
                    })
                };
                let mut lo = 2u64;
                let mut hi = 4u64;
                while !flip_grid(hi) {
                    lo = hi;
                    hi *= 2;
                }
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    if flip_grid(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                assert!(hi <= n_star && n_star <= hi * 2, "refined {hi} vs {n_star}");
            }

            // the reference noise scaling stays detected from the crossover up
            // to 1e9 under the closed-form small-noise threshold
            let mut n = n_star;
            while n <= 1_000_000_000 {
                let p = isotropic_noise_scaling(n);
                assert!(p <= 1.0);
                assert!(
                    isotropic_vsp_detects(n, p, delta, &constants).unwrap(),
                    "n={n}"
                );
                n = (n as f64 * 1.5) as u64;
            }
            assert!(isotropic_vsp_detects(
                1_000_000_000,
                isotropic_noise_scaling(1_000_000_000),
                delta,
                &constants
            )
            .unwrap());
            assert!(
                started.elapsed().as_secs_f64() < 1.0,
                "formula evaluation must stay fast"
            );
        },
    );
}

#[test]
fn criterion_10_remote_preparation_gate() {
    check(
        10,
        "conjugate-projector identity holds before any compiled box is trusted",
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(5151);
            for d in [2usize, 4, 8] {
                let phi = QState::phi_plus(d).unwrap();
                for _ in 0..100 {
                    let mut psi = DVector::from_fn(d, |_, _| {
                        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
                    });
                    let nrm = psi.norm();
                    psi /= Complex64::new(nrm, 0.0);
                    let herm = {
                        let m = DMatrix::from_fn(d, d, |_, _| {
                            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
                        });
                        (&m + m.adjoint()) * Complex64::new(0.5, 0.0)
                    };
                    let conj = psi.map(|z| z.conj());
                    let projector = &conj * conj.adjoint();
                    let lhs = kron_expectation(&projector, &herm, &phi).unwrap();
                    let brute = (projector.kronecker(&herm) * phi.rho()).trace();
                    let expected =
                        (psi.adjoint() * &herm * &psi)[(0, 0)] / Complex64::new(d as f64, 0.0);
                    assert!((lhs - expected).norm() <= 1e-10, "d={d}");
                    assert!((brute - expected).norm() <= 1e-10, "d={d}");
                }
            }
        },
    );
}

/// Deterministic basis-state protocol with binary parity readout; declared
/// success 1 and acceptance 1/d on the maximally entangled state.
fn parity_protocol(d: usize) -> (QuantumProtocol, CommProblem) {
    let x_labels: Vec<Label> = (0..d as i64).map(Label::Int).collect();
    let y_labels = vec![Label::Int(0)];
    let valid: Vec<ValidSet> = (0..d).map(|x| ValidSet::only(x % 2 == 1)).collect();
    let mu = vec![1.0 / d as f64; d];
    let problem = CommProblem::new(x_labels.clone(), y_labels, valid, mu, 1).unwrap();
    let mut states = BTreeMap::new();
    for (i, l) in x_labels.iter().enumerate() {
        let mut v = DVector::from_element(d, Complex64::new(0.0, 0.0));
        v[i] = Complex64::new(1.0, 0.0);
        states.insert(l.clone(), v);
    }
    let effect = DMatrix::from_fn(d, d, |i, j| {
        if i == j && i % 2 == 1 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let mut measurements = BTreeMap::new();
    measurements.insert(Label::Int(0), BinaryMeasurement::new(effect).unwrap());
    (
        QuantumProtocol::new(d, states, measurements, 1.0).unwrap(),
        problem,
    )
}
