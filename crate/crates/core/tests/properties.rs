use consensus_forge::coupling::{apply, iqc_admissible_gain, verify_iqc, CouplingOperator, Signal};
use consensus_forge::demo;
use consensus_forge::lmi::{negdef_margin, schur_reduce, solve_feasibility, AffineLmi, SolverOptions, SymMatrix};
use consensus_forge::network::{coupling_coefficients, spectral_decomposition, Graph, Pinning, Spectrum};
use consensus_forge::synthesis::*;
use consensus_forge::{Error, Matrix};
use proptest::prelude::*;

fn sym_from(vals: &[f64], n: usize) -> Matrix<f64> {
    let m = Matrix::from_fn(n, n, |i, j| vals[i * n + j]);
    (&m + &m.transpose()).scale(0.5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn schur_equivalence(
        vals in prop::collection::vec(-2.0f64..2.0, 25),
        shift in 0.1f64..4.0,
        keep in 1usize..4,
    ) {
        let n = 5;
        let mut m = sym_from(&vals, n);
        // Push the trailing block negative definite.
        for i in keep..n {
            m[(i, i)] = m[(i, i)] - shift - 2.0 * n as f64;
        }
        let m = SymMatrix::new(m).unwrap();
        let trailing = SymMatrix::new(m.as_matrix().block(keep, keep, n - keep, n - keep)).unwrap();
        prop_assume!(negdef_margin(&trailing).unwrap() > 0.0);
        let reduced = schur_reduce(&m, keep).unwrap();
        let full = negdef_margin(&m).unwrap();
        let red = negdef_margin(&reduced).unwrap();
        prop_assume!(full.abs() > 1e-9 && red.abs() > 1e-9);
        prop_assert_eq!(full > 0.0, red > 0.0);
    }

    #[test]
    fn eval_is_affine(
        c in prop::collection::vec(-1.0f64..1.0, 9),
        m1 in prop::collection::vec(-1.0f64..1.0, 9),
        m2 in prop::collection::vec(-1.0f64..1.0, 9),
        x in prop::collection::vec(-3.0f64..3.0, 2),
        y in prop::collection::vec(-3.0f64..3.0, 2),
    ) {
        let lmi = AffineLmi::single(sym_from(&c, 3), vec![sym_from(&m1, 3), sym_from(&m2, 3)]).unwrap();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let ex = lmi.eval(&x).unwrap().into_inner();
        let ey = lmi.eval(&y).unwrap().into_inner();
        let exy = lmi.eval(&xy).unwrap().into_inner();
        let e0 = lmi.eval(&[0.0, 0.0]).unwrap().into_inner();
        let defect = &(&(&exy - &ex) - &ey) + &e0;
        prop_assert!(defect.max_abs() < 1e-13);
    }

    #[test]
    fn sign_flip_invariance(flips in prop::collection::vec(any::<bool>(), 4), pin in 0usize..4) {
        let graph = Graph::new(4, &[(0, 1), (1, 2), (2, 3), (0, 2)]).unwrap();
        let pinning = Pinning::from_nodes(4, &[pin]).unwrap();
        let sd = consensus_forge::SpectralData::<f64>::analyze(&graph, &pinning).unwrap();
        let mut t = sd.t.clone();
        for (j, &f) in flips.iter().enumerate() {
            if f {
                for i in 0..4 {
                    t[(i, j)] = -t[(i, j)];
                }
            }
        }
        let flipped = coupling_coefficients(&Spectrum { t, lambdas: sd.lambdas.clone() }, &pinning);
        for i in 0..4 {
            prop_assert!((flipped.f[(i, i)] - sd.f[(i, i)]).abs() < 1e-14);
            prop_assert!((flipped.q[i] - sd.q[i]).abs() < 1e-14);
            prop_assert!((flipped.p[i] - sd.p[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn spectrum_round_trip(lams in prop::collection::vec(0.1f64..5.0, 4), angle in 0.0f64..3.0) {
        // Rotate a diagonal matrix by a Givens-composed orthogonal matrix.
        let (c, s) = (angle.cos(), angle.sin());
        let mut q = Matrix::identity(4);
        for (a, b) in [(0, 1), (2, 3), (1, 2)] {
            let mut g = Matrix::identity(4);
            g[(a, a)] = c;
            g[(b, b)] = c;
            g[(a, b)] = -s;
            g[(b, a)] = s;
            q = &q * &g;
        }
        let m = (&(&q * &Matrix::diag(&lams)) * &q.transpose()).symmetrized();
        let sp = spectral_decomposition(&m).unwrap();
        let again = (&(&sp.t * &Matrix::diag(&sp.lambdas)) * &sp.t.transpose()).symmetrized();
        let sp2 = spectral_decomposition(&again).unwrap();
        let mut sorted = lams.clone();
        sorted.sort_by(f64::total_cmp);
        for ((a, b), want) in sp.lambdas.iter().zip(&sp2.lambdas).zip(&sorted) {
            prop_assert!((a - want).abs() < 1e-9);
            prop_assert!((b - a).abs() < 1e-9);
        }
    }

    #[test]
    fn coupling_linearity(
        ys in prop::collection::vec(-1.0f64..1.0, 60),
        zs in prop::collection::vec(-1.0f64..1.0, 60),
        gain in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let sig = |v: &[f64]| Signal::new(0.01, v.chunks(2).map(|c| c.to_vec()).collect()).unwrap();
        let (y, z) = (sig(&ys), sig(&zs));
        let sum: Vec<f64> = ys.iter().zip(&zs).map(|(a, b)| a + b).collect();
        let neg: Vec<f64> = ys.iter().map(|v| -v).collect();
        let ops = [
            CouplingOperator::MemorylessGain { gain: Matrix::from_row_slice(2, 2, &gain).unwrap() },
            CouplingOperator::LtiFilter {
                a: Matrix::from_rows(&[[-2.0, 1.0], [0.0, -3.0]]).unwrap(),
                b: Matrix::identity(2),
                c: Matrix::from_row_slice(2, 2, &gain).unwrap(),
                d: Matrix::identity(2).scale(0.1),
            },
        ];
        for op in &ops {
            let oy = apply(op, &y).unwrap();
            let oz = apply(op, &z).unwrap();
            let osum = apply(op, &sig(&sum)).unwrap();
            let oneg = apply(op, &sig(&neg)).unwrap();
            for k in 0..oy.len() {
                for c in 0..2 {
                    let d = osum.samples[k][c] - oy.samples[k][c] - oz.samples[k][c];
                    prop_assert!(d.abs() < 1e-10);
                    if op.is_memoryless() {
                        prop_assert_eq!(oneg.samples[k][c], -oy.samples[k][c]);
                    } else {
                        prop_assert!((oneg.samples[k][c] + oy.samples[k][c]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn contractive_gain_always_passes(
        ys in prop::collection::vec(-5.0f64..5.0, 2..200),
        angle in 0.0f64..6.3,
        scale in 0.0f64..1.0,
        grid in prop::collection::vec(0.0f64..1.0, 1..10),
    ) {
        let samples: Vec<Vec<f64>> = ys.chunks(2).filter(|c| c.len() == 2).map(|c| c.to_vec()).collect();
        prop_assume!(samples.len() >= 2);
        let y = Signal::new(0.05, samples).unwrap();
        let (c, s) = (angle.cos(), angle.sin());
        let gain = Matrix::from_rows(&[[c, -s], [s, c]]).unwrap().scale(scale);
        prop_assert!(iqc_admissible_gain(&gain).unwrap().admissible);
        let times: Vec<f64> = grid.iter().map(|g| g * y.duration()).collect();
        let op = CouplingOperator::MemorylessGain { gain };
        prop_assert!(verify_iqc(&op, &y, 0.0, &times).unwrap().passed());
    }
}

#[test]
fn shrinking_margin_tol_keeps_feasible() {
    let spec = demo::pendulum::<f64>();
    let sd = spec.spectral().unwrap();
    let lmi = assemble_uniform(&spec, &sd).unwrap();
    let mut last = None;
    for tol in [1e-3, 1e-5, 1e-7, 1e-9, 1e-11] {
        let r = solve_feasibility(&lmi, tol).unwrap();
        if last == Some(true) {
            assert!(r.is_feasible(), "tol {tol} flipped feasible to infeasible");
        }
        last = Some(r.is_feasible());
    }
    assert_eq!(last, Some(true));
    // Asking for more margin than exists cannot be feasible.
    let r = solve_feasibility(&lmi, 1.0).unwrap();
    assert!(!r.is_feasible());
}

#[test]
fn bound_linear_in_d() {
    let mut spec = demo::pendulum::<f64>();
    let cert = synthesize(&spec, Method::Coupled, &SolverOptions::default()).unwrap();
    let slope: f64 = cert.pi.iter().zip(&cert.theta).map(|(p, t)| p + 2.0 * t).sum();
    let mut prev = -1.0;
    for d in [0.0, 0.5, 1.0, 3.0] {
        spec.d = d;
        let b = compute_bound(&cert, &spec).unwrap();
        assert!((b.constant - slope * d).abs() < 1e-12 * (1.0 + slope * d));
        assert!(b.constant > prev);
        prev = b.constant;
    }
}

#[test]
fn lift_holds_on_scaled_feasible_points() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let spec = demo::pendulum::<f64>();
    let sd = spec.spectral().unwrap();
    let cert = synthesize(&spec, Method::Uniform, &SolverOptions::default()).unwrap();
    let (alpha, beta) = (1.0 / cert.pi[0], 1.0 / cert.theta[0]);
    let mut tested = 0;
    for _ in 0..200 {
        let sy = rng.gen_range(0.3..1.0);
        let sa = rng.gen_range(0.8..3.0);
        let sb = rng.gen_range(0.8..3.0);
        let y = cert.y.scale(sy);
        let blk = uniform_block(&spec, &sd, &y, alpha * sa, beta * sb).unwrap();
        let blk_margin = negdef_margin(&SymMatrix::new(blk).unwrap()).unwrap();
        let ypd = consensus_forge::linalg::cholesky(&y).is_some();
        if blk_margin > 0.0 && ypd {
            tested += 1;
            let lifted = lift_uniform_solution(&spec, &sd, &y, 1.0 / (alpha * sa), 1.0 / (beta * sb)).unwrap();
            assert!(lifted.riccati_margins.iter().all(|&m| m > 0.0));
        }
    }
    assert!(tested > 20, "only {tested} feasible samples");

    // Random networks solved from scratch.
    for seed in 0..6u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..6);
        let edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
        let mut spec = demo::pendulum_with::<f64>(&demo::PendulumParams { agents: n, ..Default::default() });
        spec.graph = Graph::new(n, &edges).unwrap();
        spec.pinning = Pinning::from_nodes(n, &[rng.gen_range(0..n)]).unwrap();
        if let Ok(cert) = synthesize(&spec, Method::Uniform, &SolverOptions::default()) {
            assert!(cert.riccati_margins.iter().all(|&m| m > 0.0));
            assert_eq!(cert.riccati_margins.len(), n);
        }
    }
}

#[test]
fn broken_uniform_point_is_rejected() {
    let spec = demo::pendulum::<f64>();
    let sd = spec.spectral().unwrap();
    let cert = synthesize(&spec, Method::Uniform, &SolverOptions::default()).unwrap();
    let y = cert.y.scale(1e6);
    let blk = uniform_block(&spec, &sd, &y, 1.0 / cert.pi[0], 1.0 / cert.theta[0]).unwrap();
    assert!(negdef_margin(&SymMatrix::new(blk).unwrap()).unwrap() < 0.0);
    assert!(matches!(
        lift_uniform_solution(&spec, &sd, &y, cert.pi[0], cert.theta[0]),
        Err(Error::LiftRejected { .. })
    ));
}

#[test]
fn scaled_y_breaks_riccati() {
    let spec = demo::pendulum::<f64>();
    let sd = spec.spectral().unwrap();
    let cert = synthesize(&spec, Method::Coupled, &SolverOptions::default()).unwrap();
    let y = cert.y.scale(1e6);
    for i in 0..3 {
        let m = verify_riccati(&spec, &sd, &y, &cert.f, &cert.pi, &cert.theta, i).unwrap();
        assert!(m < 0.0);
    }
}

#[test]
fn single_precision_pipeline() {
    let spec = demo::pendulum::<f32>();
    let sd = spec.spectral().unwrap();
    let lmi = assemble_uniform(&spec, &sd).unwrap();
    assert_eq!(lmi.dim(), 10);
    let r = solve_feasibility(&lmi, 1e-4).unwrap();
    assert!(r.is_feasible(), "{:?}", r.diagnostics);
    assert!(r.margin >= 1e-4);
}
