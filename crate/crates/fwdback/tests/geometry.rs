use fwdback::geometry::*;
use fwdback::profile::Profile;
use fwdback::VecN;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn prof() -> Profile<f64> {
    Profile::quadratic_glued()
}

fn sigma(s: f64) -> f64 {
    if s <= 4.0 {
        s * (s - 3.0)
    } else {
        4.0 + 5.0 * (s - 4.0)
    }
}

#[test]
fn half_angle_examples() {
    assert_eq!(half_angle(1.0, 3.0, 1.0, 1.0).unwrap(), 0.0);
    let th = half_angle(1.0f64, 2.0, 2.0, 1.0).unwrap();
    assert!((th - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    assert!(matches!(half_angle(1.0, 2.0, 1.0, 2.0), Err(GeometryError::NoSolution)));
    assert!(matches!(half_angle(2.0, 1.0, 1.0, 1.0), Err(GeometryError::OutOfDomain(_))));
}

proptest! {
    #[test]
    fn half_angle_solves_the_relation(r1 in 0.01f64..5.0, dr in 0.01f64..5.0, rt2 in 0.01f64..5.0, drt in 0.0f64..5.0) {
        let (r2, rt1) = (r1 + dr, rt2 + drt);
        let th = half_angle(r1, r2, rt1, rt2).unwrap();
        prop_assert!((0.0..std::f64::consts::FRAC_PI_2).contains(&th));
        prop_assert!(half_angle_residual(r1, r2, rt1, rt2, th).abs() <= 1e-12);
    }
}

#[test]
fn perturbation_bound_at_zero_widths() {
    let inp = PerturbationInput::zero_widths(2.618034, 3.302776, 1.0);
    assert_eq!(perturbation_bound(&inp).unwrap(), 0.0);
}

#[test]
fn perturbation_bound_small_widths() {
    let w: f64 = 1e-6;
    let inp = PerturbationInput { a: 2.618034, b: 3.302776, c: 1.0, d11: w, d12: w, d21: w, d22: w, e1: w, e2: w };
    let h = perturbation_bound(&inp).unwrap();
    // direct evaluation of the closed form
    let g = (((inp.a + inp.b + 2.0 * w) * 2.0 * w) / (2.0 * (inp.b - inp.a - 2.0 * w) * (1.0 - w))).sqrt().atan();
    let chord = |c: f64, r: f64| (r * r + c * c - 2.0 * c * r * g.cos()).sqrt();
    let expect = [
        chord(inp.a, inp.a + w),
        chord(inp.a, inp.a - w),
        chord(inp.b, inp.b + w),
        chord(inp.b, inp.b - w),
        chord(1.0, 1.0 + w),
        chord(1.0, 1.0 - w),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    assert!((h - expect).abs() < 1e-15);
    assert!(h < 1e-2);
}

#[test]
fn perturbation_bound_domain() {
    let mut inp = PerturbationInput::zero_widths(1.0, 2.0, 1.0);
    inp.d12 = 0.5;
    assert!(matches!(perturbation_bound(&inp), Err(GeometryError::OutOfDomain(_))));
    inp.d12 = 0.0;
    inp.e1 = 1.0;
    assert!(perturbation_bound(&inp).is_err());
}

#[test]
fn perturbation_bound_grows_with_level_widths() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let a: f64 = rng.gen_range(0.1..3.0);
        let b = a + rng.gen_range(0.1..3.0);
        let c: f64 = rng.gen_range(0.1..3.0);
        let half = (b - a) / 2.0;
        let mut inp = PerturbationInput {
            a,
            b,
            c,
            d11: rng.gen_range(0.0..a),
            d12: rng.gen_range(0.0..half),
            d21: rng.gen_range(0.0..half),
            d22: rng.gen_range(0.0..1.0),
            e1: rng.gen_range(0.0..c / 2.0),
            e2: rng.gen_range(0.0..1.0),
        };
        let h0 = perturbation_bound(&inp).unwrap();
        inp.e1 *= 2.0;
        inp.e2 *= 2.0;
        let h1 = perturbation_bound(&inp).unwrap();
        assert!(h1 >= h0, "{h1} < {h0}");
    }
}

#[test]
fn collinear_pairs() {
    let p = prof();
    let c = collinear_connection(&p, 1.0, VecN::new2(1.0, 0.0), SolutionType::TypeI).unwrap();
    assert!((c.p_plus[0] - 3.302776).abs() < 1e-6 && c.p_plus[1] == 0.0);
    assert!((c.p_minus[0] + 2.618034).abs() < 1e-6);
    assert_eq!(c.beta, VecN::new2(1.0, 0.0));
    let c2 = collinear_connection(&p, 1.0, VecN::new2(1.0, 0.0), SolutionType::TypeII).unwrap();
    assert!((c2.p_minus[0] + 0.381966).abs() < 1e-6);
    for pair in [c, c2] {
        assert!((p.flux(pair.p_plus) - pair.beta).norm() < 1e-10);
        assert!((p.flux(pair.p_minus) - pair.beta).norm() < 1e-10);
    }
    assert!(collinear_connection(&p, 2.5, VecN::new1(1.0), SolutionType::TypeI).is_err());
}

fn unit_window() -> Window<f64> {
    Window::new(1.0, 0.1, SolutionType::TypeI)
}

#[test]
fn frame_at_collinear_midpoint() {
    let p = prof();
    let mid = ((3.0 + 13f64.sqrt()) / 2.0 - (3.0 + 5f64.sqrt()) / 2.0) / 2.0;
    assert!((mid - 0.342371).abs() < 1e-6);
    for dim in [1, 2] {
        let pt = DiagonalPoint::new(VecN::e1(dim) * mid, VecN::e1(dim));
        let f = solve_frame(&p, &pt, &unit_window(), None).unwrap();
        assert!((f.q - VecN::e1(dim)).norm() < 1e-12);
        assert!(f.gamma.norm() < 1e-12);
        assert!((f.t_plus - 2.960405).abs() < 1e-6);
        assert!((f.t_minus + 2.960405).abs() < 1e-6);
        let d = decompose(&pt, &f, 1.0).unwrap();
        assert!((d.lambda - 0.5).abs() < 1e-12);
    }
}

#[test]
fn frame_off_the_axis() {
    let p = prof();
    let w = unit_window();
    let geom = w.geometry(&p).unwrap();
    let pt = DiagonalPoint::new(VecN::new2(0.342371, 0.01), VecN::new2(1.0, 0.0));
    let f = solve_frame(&p, &pt, &w, None).unwrap();
    assert!(frame_residual(&p, &pt, &f) < 1e-10);
    let (pm, pp) = f.endpoints(pt.p);
    assert!(pp.norm() > geom.plus.0 && pp.norm() < geom.plus.1);
    assert!(pm.norm() > geom.minus.0 && pm.norm() < geom.minus.1);
    assert!((f.q.norm() - 1.0).abs() < 1e-12);
    assert!(f.gamma.dot(&f.q).abs() < 1e-12);
    assert!(f.t_minus < 0.0 && f.t_plus > 0.0);
    // warm start from the solution reproduces it
    let g = solve_frame(&p, &pt, &w, Some(&f)).unwrap();
    assert!((g.t_plus - f.t_plus).abs() < 1e-10);
}

#[test]
fn frame_outside_s() {
    let p = prof();
    let w = unit_window();
    let far = p.s_plus_of(1.1).unwrap() + 0.5;
    let pt = DiagonalPoint::new(VecN::new2(far, 0.0), VecN::new2(1.0, 0.0));
    assert!(matches!(solve_frame(&p, &pt, &w, None), Err(GeometryError::NotInS(_))));
    // level outside the window
    let pt = DiagonalPoint::new(VecN::new1(0.3), VecN::new1(1.5));
    assert!(matches!(solve_frame(&p, &pt, &w, None), Err(GeometryError::NotInS(_))));
}

#[test]
fn det_collinear_one_dimensional() {
    let p = prof();
    let w = unit_window().geometry(&p).unwrap();
    let kbar = (3.0 + 13f64.sqrt()) / 2.0;
    let lbar = -(3.0 + 5f64.sqrt()) / 2.0;
    let v = det_b(&p, &w, VecN::new1(kbar), VecN::new1(lbar), VecN::new1(1.0), VecN::new1(0.0)).unwrap();
    // 1 + (sigma'(|u|) - a_u + a_v) / (a_u - a_v)
    let a_u = sigma(-lbar) / -lbar;
    let a_v = sigma(kbar) / kbar;
    let expect = 1.0 + (5f64.sqrt() - a_u + a_v) / (a_u - a_v);
    assert!((v - expect).abs() < 1e-12);
    assert!((v + 3.26556).abs() < 1e-4);
    let bad = det_b(&p, &w, VecN::new2(kbar, 0.0), VecN::new2(lbar, 0.0), VecN::new2(1.0, 0.0), VecN::new2(0.0, 2.0));
    assert!(matches!(bad, Err(GeometryError::OutOfDomain(_))));
}

#[test]
fn det_is_rotation_invariant() {
    let p = prof();
    let w = Window::new(1.0, 0.1, SolutionType::TypeI).geometry(&p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let th: f64 = rng.gen_range(0.0..6.28);
        let v = VecN::new2(3.30, 0.05);
        let u = VecN::new2(-2.62, 0.02);
        let q = VecN::new2(1.0, 0.01).normalized().unwrap();
        let gamma = q.perp() * 0.03;
        let a = det_b(&p, &w, v, u, q, gamma).unwrap();
        let b = det_b(&p, &w, v.rotated(th), u.rotated(th), q.rotated(th), gamma.rotated(th)).unwrap();
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn mu_prime_estimates() {
    let p = prof();
    let m = estimate_mu_prime(&p, 1.0, SolutionType::TypeI).unwrap();
    assert!(m.mu > 0.0 && m.samples >= 1000);
    let tip = estimate_mu_prime(&p, 2.249, SolutionType::TypeI).unwrap();
    assert!(tip.mu < 0.001);
    assert!(estimate_mu_prime(&p, 2.3, SolutionType::TypeI).is_err());
    assert!(estimate_mu_prime(&p, 0.0, SolutionType::TypeII).is_err());
    let m2 = estimate_mu_prime(&p, 1.0, SolutionType::TypeII).unwrap();
    assert!(m2.mu > 0.0);
}

#[test]
fn decompose_rejects_zero_scaling() {
    let pt = DiagonalPoint::new(VecN::new1(0.3), VecN::new1(1.0));
    let f = RankOneFrame { q: VecN::new1(1.0), gamma: VecN::new1(0.0), t_minus: -1.0, t_plus: 2.0 };
    assert!(matches!(decompose(&pt, &f, 0.0), Err(GeometryError::ZeroScaling)));
}

fn to_na(m: &fwdback::linalg::Mat<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

#[test]
fn decompose_rank_one_against_svd_oracle() {
    let p = prof();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = Window::new(1.0, 0.1, SolutionType::TypeI);
    let mut checked = 0;
    while checked < 100 {
        let lam: f64 = rng.gen_range(0.1..0.9);
        let th: f64 = rng.gen_range(0.0..6.28);
        let z = VecN::new2(th.cos(), th.sin());
        let c = collinear_connection(&p, 1.0, z, SolutionType::TypeI).unwrap();
        let pert = z.perp() * rng.gen_range(-1e-3..1e-3);
        let pt = DiagonalPoint::new(c.p_plus * lam + c.p_minus * (1.0 - lam) + pert, c.beta);
        let f = solve_frame(&p, &pt, &w, None).unwrap();
        let b: f64 = rng.gen_range(0.2..3.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let d = decompose(&pt, &f, b).unwrap();
        let diff = to_na(&d.xi_plus) - to_na(&d.xi_minus);
        let sv = diff.singular_values();
        let mut sv: Vec<f64> = sv.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(sv[1] <= 1e-10 * sv[0]);
        assert!(d.rank_ratio <= 1e-10);
        assert!((d.rank_ratio * sv[0] - sv[1]).abs() < 1e-12 * sv[0]);
        // trace of the lower-left block of the difference vanishes
        let tr = diff[(1, 0)] + diff[(2, 1)];
        assert!(tr.abs() < 1e-12);
        // convex combination reproduces the point
        let comb = d.xi_plus.scale(d.lambda).add(&d.xi_minus.scale(1.0 - d.lambda));
        assert!(comb.sub(&d.xi).max_abs() < 1e-9);
        checked += 1;
    }
}

#[test]
fn accepted_points_respect_window_bounds() {
    let p = prof();
    let w = Window::new(1.0, 0.1, SolutionType::TypeII);
    let geom = w.geometry(&p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut accepted = 0;
    for _ in 0..400 {
        let pt = DiagonalPoint::new(
            VecN::new2(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)),
            VecN::new2(rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2)),
        );
        if solve_frame(&p, &pt, &w, None).is_ok() {
            accepted += 1;
            assert!(pt.p.norm() <= geom.plus.1 + 1e-10);
            assert!(pt.beta.norm() <= w.hi() + 1e-10);
        }
    }
    assert!(accepted > 0);
}

#[test]
fn approximate_connections_stay_near_collinear() {
    let p = prof();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for ty in [SolutionType::TypeI, SolutionType::TypeII] {
        let r = 1.0;
        let mu = estimate_mu_prime(&p, r, ty).unwrap().mu;
        let geom = Window::new(r, mu, ty).geometry(&p).unwrap();
        let h = perturbation_bound(&connection_widths(&p, r, mu, ty).unwrap()).unwrap();
        let (sp, sm) = (p.s_plus_of(r).unwrap(), match ty {
            SolutionType::TypeI => p.s_minus2_of(r).unwrap(),
            SolutionType::TypeII => p.s_minus1_of(r).unwrap(),
        });
        let mut tested = 0;
        while tested < 200 {
            let r1 = rng.gen_range(geom.minus.0..geom.minus.1);
            let r2 = rng.gen_range(geom.plus.0..geom.plus.1);
            let (rt1, rt2) = (-p.sigma(r1), p.sigma(r2));
            let Ok(th) = half_angle(r1, r2, rt1, rt2) else { continue };
            let rot: f64 = rng.gen_range(0.0..6.28);
            let pp = VecN::new2(r2 * th.sin(), r2 * th.cos()).rotated(rot);
            let pm = VecN::new2(r1 * th.sin(), -r1 * th.cos()).rotated(rot);
            // admissible: trace-free orthogonality
            let orth = (p.flux(pp) - p.flux(pm)).dot(&(pp - pm));
            assert!(orth.abs() < 1e-10);
            let z = (pp * (1.0 / r2) - pm * (1.0 / r1)).normalized().unwrap();
            let (p0p, p0m, b0) = (z * sp, z * (-sm), z * r);
            let dist = [
                (p0m - pm).norm(),
                (p0p - pp).norm(),
                (p.flux(p0m) - p.flux(pm)).norm(),
                (p.flux(p0p) - p.flux(pp)).norm(),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            assert!(dist <= h + 1e-12, "{dist} > {h}");
            assert!((p.flux(p0p) - b0).norm() < 1e-10);
            tested += 1;
        }
    }
}
