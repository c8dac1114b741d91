use fwdback::oscillation::*;
use fwdback::parabolic::grid::divergence;
use fwdback::parabolic::{GridST, ScalarField, VectorField};
use fwdback::VecN;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn unit_box(n: usize) -> BoxST {
    BoxST::continuum(vec![0.0; n + 1], vec![1.0; n + 1]).unwrap()
}

fn random_frame(rng: &mut ChaCha8Rng, n: usize) -> (LaminateFrame, f64, f64) {
    let th: f64 = rng.gen_range(0.0..2.0 * PI);
    let q = if n == 1 { VecN::new1(if rng.gen_bool(0.5) { 1.0 } else { -1.0 }) } else { VecN::new2(th.cos(), th.sin()) };
    let gamma = if n == 1 { VecN::new1(0.0) } else { q.perp() * rng.gen_range(-2.0..2.0) };
    let b = rng.gen_range(0.2..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    (LaminateFrame { q, b, gamma }, rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0))
}

#[test]
fn one_dimensional_sawtooth_has_unit_slopes() {
    let frame = LaminateFrame { q: VecN::new1(1.0), b: 1.0, gamma: VecN::new1(0.0) };
    let bx = unit_box(1);
    let patch = build_laminate(&frame, 1.0, 1.0, &bx, 0.1).unwrap();
    let audit = patch.audit(4);
    assert!(audit.passes(), "{audit:?}");
    // ψ vanishes identically
    for i in 0..50 {
        let z = [0.013 + i as f64 * 0.019, 0.5];
        assert_eq!(patch.value(&z)[1], 0.0);
        let g = patch.gradient(&z);
        assert_eq!(g[(1, 0)], 0.0);
        assert_eq!(g[(1, 1)], 0.0);
    }
    let grid = BoxST::new(bx.lo.clone(), bx.hi.clone(), vec![64, 64]).unwrap().local_grid().unwrap();
    let (_, psi) = patch.discretize(&grid);
    assert!(psi.x.iter().all(|s| s.iter().all(|v| *v == 0.0)));
    // on the plateau the spatial slope is ±1
    let c = patch.gradient(&[0.5, 0.5])[(0, 0)];
    assert!((c.abs() - 1.0).abs() < 1e-9 || c.abs() < 1.0);
}

#[test]
fn two_dimensional_stream_function_is_divergence_free() {
    let frame = LaminateFrame { q: VecN::new2(1.0, 0.0), b: 1.0, gamma: VecN::new2(0.0, 1.0) };
    let patch = build_laminate(&frame, 1.0, 1.0, &unit_box(2), 0.3).unwrap();
    let audit = patch.audit(4);
    assert!(audit.div_residual <= 1e-8, "{audit:?}");
    assert!(audit.passes(), "{audit:?}");
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let frame = LaminateFrame { q: VecN::new2(0.6, 0.8), b: 0.7, gamma: VecN::new2(-0.8, 0.6) * 1.3 };
    let patch = build_laminate(&frame, 0.8, 1.4, &unit_box(2), 0.3).unwrap();
    // steps well inside the smoothed kinks
    let h = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let z: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let g = patch.gradient(&z);
        for k in 0..3 {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[k] += h;
            zm[k] -= h;
            let (vp, vm) = (patch.value(&zp), patch.value(&zm));
            for i in 0..3 {
                let fd = (vp[i] - vm[i]) / (2.0 * h);
                assert!((fd - g[(i, k)]).abs() <= 1e-5 * (1.0 + g[(i, k)].abs()), "component {i} axis {k}: {fd} vs {}", g[(i, k)]);
            }
        }
    }
}

#[test]
fn budget_above_box_measure_gives_zero_patch() {
    let frame = LaminateFrame { q: VecN::new1(1.0), b: 1.0, gamma: VecN::new1(0.0) };
    let bx = BoxST::continuum(vec![0.0, 0.0], vec![0.5, 0.5]).unwrap();
    let patch = build_laminate(&frame, 1.0, 2.0, &bx, 0.3).unwrap();
    assert!(patch.zero);
    let audit = patch.audit(4);
    assert_eq!(audit.sup_norm, 0.0);
    assert_eq!(audit.div_residual, 0.0);
    // every point is exceptional, but the whole box is below the budget
    assert!(audit.off_measure <= bx.measure() && audit.off_measure < 0.3);
}

#[test]
fn random_frames_meet_all_budgets() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [1, 2] {
        for eps in [0.3, 0.1, 0.03] {
            for _ in 0..10 {
                let (frame, l1, l2) = random_frame(&mut rng, n);
                let patch = build_laminate(&frame, l1, l2, &unit_box(n), eps).unwrap();
                let audit = patch.audit(4);
                assert!(audit.passes(), "n={n} eps={eps} {frame:?} {audit:?}");
            }
        }
    }
}

#[test]
fn invalid_frames_are_rejected() {
    let bx = unit_box(1);
    let bad_gamma = LaminateFrame { q: VecN::new1(1.0), b: 1.0, gamma: VecN::new1(0.5) };
    assert!(matches!(build_laminate(&bad_gamma, 1.0, 1.0, &bx, 0.1), Err(OscillationError::InvalidFrame(_))));
    let bad_q = LaminateFrame { q: VecN::new1(0.5), b: 1.0, gamma: VecN::new1(0.0) };
    assert!(build_laminate(&bad_q, 1.0, 1.0, &bx, 0.1).is_err());
    let zero_b = LaminateFrame { q: VecN::new1(1.0), b: 0.0, gamma: VecN::new1(0.0) };
    assert!(build_laminate(&zero_b, 1.0, 1.0, &bx, 0.1).is_err());
}

#[test]
fn coarse_grid_makes_the_budget_infeasible() {
    let frame = LaminateFrame { q: VecN::new1(1.0), b: 1.0, gamma: VecN::new1(0.0) };
    let bx = BoxST::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![32, 32]).unwrap();
    match build_laminate(&frame, 1.0, 1.0, &bx, 0.1) {
        Err(OscillationError::BudgetInfeasible { required, available, .. }) => assert!(available < required),
        other => panic!("expected infeasible, got {other:?}"),
    }
}

fn box_1d(nx: usize, nt: usize) -> BoxST {
    BoxST::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![nx, nt]).unwrap()
}

#[test]
fn one_dimensional_inverse_matches_antiderivative() {
    let bx = box_1d(128, 8);
    let grid = bx.local_grid().unwrap();
    let w = |t: f64| 1.0 + t * t;
    let phi = ScalarField {
        slices: (0..grid.levels()).map(|k| grid.cell_averages(|x, _| (2.0 * PI * x).sin() * w(grid.time(k)))).collect(),
    };
    let inv = div_right_inverse(&phi, &bx, None).unwrap();
    for k in 0..grid.levels() {
        let g = &inv.g.x[k];
        for i in 0..=128 {
            let x = i as f64 / 128.0;
            let exact = (1.0 - (2.0 * PI * x).cos()) * w(grid.time(k)) / (2.0 * PI);
            assert!((g[i] - exact).abs() <= 1e-10, "face {i}: {} vs {exact}", g[i]);
        }
        assert_eq!(g[0], 0.0);
        assert_eq!(g[128], 0.0);
    }
    assert!(inv.measured_constant <= 10.0 * inv.default_constant);
}

#[test]
fn inverse_of_zero_is_zero_and_constants_are_rejected() {
    let bx = box_1d(16, 4);
    let grid = bx.local_grid().unwrap();
    let zero = ScalarField::zeros(&grid);
    let inv = div_right_inverse(&zero, &bx, None).unwrap();
    assert!(inv.g.x.iter().all(|s| s.iter().all(|v| *v == 0.0)));
    let mut c = ScalarField::zeros(&grid);
    c.slices[2] = vec![1.5; 16];
    assert!(matches!(div_right_inverse(&c, &bx, None), Err(OscillationError::MeanNotZero { slice: 2, .. })));
}

#[test]
fn collar_violations_are_reported() {
    let bx = box_1d(16, 2);
    let grid = bx.local_grid().unwrap();
    let mut phi = ScalarField::zeros(&grid);
    phi.slices[1][0] = 1.0;
    phi.slices[1][8] = -1.0;
    assert!(matches!(div_right_inverse(&phi, &bx, Some(2)), Err(OscillationError::BoundaryNotClean { slice: 1, .. })));
    assert!(div_right_inverse(&phi, &bx, None).is_ok());
}

fn random_zero_mean(rng: &mut ChaCha8Rng, grid: &GridST) -> ScalarField {
    let mut f = ScalarField::zeros(grid);
    for s in &mut f.slices {
        for v in s.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let m = s.iter().sum::<f64>() / s.len() as f64;
        s.iter_mut().for_each(|v| *v -= m);
    }
    f
}

#[test]
fn random_fields_are_inverted_in_both_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let boxes = [
        box_1d(40, 6),
        BoxST::new(vec![0.2, -1.0, 0.0], vec![1.0, 0.5, 0.3], vec![24, 18, 6]).unwrap(),
    ];
    for bx in &boxes {
        let grid = bx.local_grid().unwrap();
        for _ in 0..20 {
            let phi = random_zero_mean(&mut rng, &grid);
            let inv = div_right_inverse(&phi, bx, None).unwrap();
            for k in 0..grid.levels() {
                let d = divergence(&grid, &inv.g.x[k], &inv.g.y[k]);
                let err = d.iter().zip(&phi.slices[k]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err <= 1e-8 * max_abs(&phi.slices[k]), "div error {err}");
                for j in 0..grid.ny {
                    assert_eq!(inv.g.x[k][grid.x_face(0, j)], 0.0);
                    assert_eq!(inv.g.x[k][grid.x_face(grid.nx, j)], 0.0);
                }
                if grid.dim == 2 {
                    for i in 0..grid.nx {
                        assert_eq!(inv.g.y[k][grid.y_face(i, 0)], 0.0);
                        assert_eq!(inv.g.y[k][grid.y_face(i, grid.ny)], 0.0);
                    }
                }
            }
            assert!(inv.measured_constant <= 10.0 * inv.default_constant, "constant {}", inv.measured_constant);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn inverse_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bx = BoxST::new(vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0], vec![12, 10, 3]).unwrap();
        let grid = bx.local_grid().unwrap();
        let p1 = random_zero_mean(&mut rng, &grid);
        let p2 = random_zero_mean(&mut rng, &grid);
        let comb = ScalarField {
            slices: p1.slices.iter().zip(&p2.slices).map(|(x, y)| x.iter().zip(y).map(|(u, v)| a * u + b * v).collect()).collect(),
        };
        let (r1, r2, rc) = (
            div_right_inverse(&p1, &bx, None).unwrap().g,
            div_right_inverse(&p2, &bx, None).unwrap().g,
            div_right_inverse(&comb, &bx, None).unwrap().g,
        );
        for k in 0..grid.levels() {
            for (f, v) in rc.x[k].iter().enumerate() {
                prop_assert!((v - (a * r1.x[k][f] + b * r2.x[k][f])).abs() <= 1e-12 * (1.0 + v.abs()) * 10.0);
            }
            for (f, v) in rc.y[k].iter().enumerate() {
                prop_assert!((v - (a * r1.y[k][f] + b * r2.y[k][f])).abs() <= 1e-12 * (1.0 + v.abs()) * 10.0);
            }
        }
    }
}

#[test]
fn zero_patch_application_is_identity() {
    let grid = GridST::new_1d(32, 1.0, 16, 1.0).unwrap();
    let mut u = ScalarField { slices: vec![(0..32).map(|i| i as f64).collect(); 17] };
    let mut v = VectorField::zeros(&grid);
    let before = (u.clone(), v.clone());
    let bx = BoxST::on_grid(&grid, 4, 0, 2, 8, 1, 8).unwrap();
    let local = bx.local_grid().unwrap();
    apply_patch(&mut u, &mut v, &grid, &local, Placement { i0: 4, j0: 0, k0: 2 }, &ScalarField::zeros(&local), &VectorField::zeros(&local)).unwrap();
    assert_eq!(before.0, u);
    assert_eq!(before.1, v);
}

#[test]
fn patch_application_is_local_and_keeps_divergence() {
    let grid = GridST::new_2d(32, 24, 1.0, 1.0, 12, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut v = VectorField::zeros(&grid);
    for k in 0..grid.levels() {
        for f in 0..grid.x_faces() {
            v.x[k][f] = rng.gen_range(-1.0..1.0);
        }
        for f in 0..grid.y_faces() {
            v.y[k][f] = rng.gen_range(-1.0..1.0);
        }
        for j in 0..grid.ny {
            v.x[k][grid.x_face(0, j)] = 0.0;
            v.x[k][grid.x_face(grid.nx, j)] = 0.0;
        }
        for i in 0..grid.nx {
            v.y[k][grid.y_face(i, 0)] = 0.0;
            v.y[k][grid.y_face(i, grid.ny)] = 0.0;
        }
    }
    let mut u = ScalarField { slices: (0..grid.levels()).map(|k| divergence(&grid, &v.x[k], &v.y[k])).collect() };
    let (u0, v0) = (u.clone(), v.clone());

    let at = Placement { i0: 5, j0: 7, k0: 2 };
    let bx = BoxST::on_grid(&grid, at.i0, at.j0, at.k0, 12, 10, 8).unwrap();
    let local = bx.local_grid().unwrap();
    let frame = LaminateFrame { q: VecN::new2(0.8, 0.6), b: 1.0, gamma: VecN::new2(-0.6, 0.8) };
    let cont = BoxST::continuum(bx.lo.clone(), bx.hi.clone()).unwrap();
    let patch = build_laminate(&frame, 1.0, 1.5, &cont, 0.01).unwrap();
    let (phi, psi) = patch.discretize(&local);
    let inv = div_right_inverse(&phi, &bx, None).unwrap();
    let mut flux = psi.clone();
    for k in 0..local.levels() {
        flux.x[k].iter_mut().zip(&inv.g.x[k]).for_each(|(a, b)| *a += b);
        flux.y[k].iter_mut().zip(&inv.g.y[k]).for_each(|(a, b)| *a += b);
    }
    apply_patch(&mut u, &mut v, &grid, &local, at, &phi, &flux).unwrap();

    let mut changed = 0;
    for k in 0..grid.levels() {
        let d = divergence(&grid, &v.x[k], &v.y[k]);
        let err = d.iter().zip(&u.slices[k]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-10, "level {k}: {err}");
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let c = grid.cell(i, j);
                let inside = (5..17).contains(&i) && (7..17).contains(&j) && (2..=10).contains(&k);
                if !inside {
                    assert_eq!(u.slices[k][c].to_bits(), u0.slices[k][c].to_bits());
                } else if u.slices[k][c] != u0.slices[k][c] {
                    changed += 1;
                }
            }
        }
    }
    assert!(changed > 0);
    let du = u.slices.iter().zip(&u0.slices).flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs())).fold(0.0, f64::max);
    assert!(du < 0.01 + 1e-12);
    let _ = v0;
}
