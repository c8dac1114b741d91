use fwdback::profile::{Profile, ProfileError};
use fwdback::VecN;
use proptest::prelude::*;

fn test_profile() -> Profile<f64> {
    Profile::quadratic_glued()
}

/// Independent bisection used as an oracle.
fn oracle_root(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa0 = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == (fa0 > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn glued(s: f64) -> f64 {
    if s <= 4.0 {
        s * (s - 3.0)
    } else {
        4.0 + 5.0 * (s - 4.0)
    }
}

#[test]
fn glued_quadratic_passes_validation() {
    let p = test_profile();
    let report = p.validate_nf(1000).unwrap();
    assert!(report.passed());
    assert_eq!(p.sigma(p.s_minus), -2.25);
    // derivative pieces against the symbolic derivative of the closed forms
    for i in 0..100 {
        let s = 0.05 + i as f64 * 0.1;
        let exact = if s <= 4.0 { 2.0 * s - 3.0 } else { 5.0 };
        assert!((p.sigma_prime(s) - exact).abs() < 1e-14);
    }
}

#[test]
fn fourier_profiles_are_rejected() {
    for src in ["s", "-s", "s^3 + s"] {
        let e = Profile::<f64>::from_expr(src).unwrap_err();
        assert!(matches!(e, ProfileError::NotNonFourier { .. }), "{src}: {e:?}");
    }
}

#[test]
fn expression_matches_preset() {
    let e = Profile::<f64>::from_expr("min(s,4)*(min(s,4)-3) + 5*max(s-4,0)").unwrap();
    let p = test_profile();
    assert!((e.s_minus - p.s_minus).abs() < 1e-12);
    assert!((e.s_zero - p.s_zero).abs() < 1e-12);
    assert!((e.s_plus - p.s_plus).abs() < 1e-12);
}

#[test]
fn validation_reports_the_violating_clause() {
    // landmarks deliberately wrong: s_zero is not a zero of sigma
    let bad = Profile::from_parts("bad", glued, |s| if s <= 4.0 { 2.0 * s - 3.0 } else { 5.0 }, 1.5, 2.5, 3.6, (5.0, 5.0), 14.0);
    let report = bad.nf_report(1000);
    assert!(!report.passed());
    let f = report.first_failure().unwrap();
    assert_eq!(f.clause, "sigma(s_zero) = 0");
    assert_eq!(f.violation, Some(2.5));
    assert!(matches!(bad.validate_nf(1000), Err(ProfileError::NotNonFourier { .. })));
}

#[test]
fn s_plus_closed_form() {
    let p = test_profile();
    assert!((p.s_plus - (3.0 + 3.0 * 2f64.sqrt()) / 2.0).abs() < 1e-10);
    assert!((p.r_max() - 2.25).abs() < 1e-12);
}

#[test]
fn branch_inverses_at_unit_level() {
    let b = test_profile().branch_inverses(1.0).unwrap();
    assert!((b.s_plus_r - (3.0 + 13f64.sqrt()) / 2.0).abs() < 1e-10);
    assert!((b.s_minus1_r - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-10);
    assert!((b.s_minus2_r - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-10);
    assert!((b.s_plus_r - oracle_root(|s| glued(s) - 1.0, 3.0, 3.7)).abs() < 1e-12);
    assert!((b.s_minus1_r - oracle_root(|s| glued(s) + 1.0, 0.0, 1.5)).abs() < 1e-12);
    assert!((b.s_minus2_r - oracle_root(|s| glued(s) + 1.0, 1.5, 3.0)).abs() < 1e-12);
}

#[test]
fn branch_inverses_out_of_range() {
    let p = test_profile();
    assert!(matches!(p.branch_inverses(2.25), Err(ProfileError::OutOfRange { .. })));
    assert!(matches!(p.branch_inverses(0.0), Err(ProfileError::OutOfRange { .. })));
    assert!(matches!(p.branch_inverses(-1.0), Err(ProfileError::OutOfRange { .. })));
}

#[test]
fn branch_limits_near_zero_level() {
    let b = test_profile().branch_inverses(1e-6).unwrap();
    assert!((b.s_plus_r - 3.0).abs() < 1e-3);
    assert!(b.s_minus1_r.abs() < 1e-3);
    assert!((b.s_minus2_r - 3.0).abs() < 1e-3);
    assert!((b.s_plus_r - oracle_root(|s| glued(s) - 1e-6, 3.0, 3.7)).abs() < 1e-12);
}

#[test]
fn branch_monotonicity() {
    // s_+ and s_-^1 increase with the level, s_-^2 decreases
    let p = test_profile();
    let mut prev = p.branch_inverses(0.01).unwrap();
    for i in 2..225 {
        let b = p.branch_inverses(i as f64 * 0.01).unwrap();
        assert!(b.s_plus_r > prev.s_plus_r);
        assert!(b.s_minus1_r > prev.s_minus1_r);
        assert!(b.s_minus2_r < prev.s_minus2_r);
        prev = b;
    }
}

#[test]
fn flux_examples() {
    let p = test_profile();
    assert_eq!(p.flux(VecN::new2(0.0, 0.0)), VecN::new2(0.0, 0.0));
    assert_eq!(p.flux(VecN::new2(3.0, 0.0)), VecN::new2(0.0, 0.0));
    assert_eq!(p.flux(VecN::new2(1.5, 0.0)), VecN::new2(-2.25, 0.0));
    assert_eq!(p.flux(VecN::new1(-1.5)), VecN::new1(2.25));
}

#[test]
fn modified_profile_at_unit_cut() {
    let p = test_profile();
    let m = p.modify(1.0).unwrap();
    let joint = (3.0 + 13f64.sqrt()) / 2.0;
    assert!((m.joint - joint).abs() < 1e-12);
    assert!((m.sigma_tilde(joint) - 1.0).abs() < 1e-10);
    assert!((m.sigma_tilde_prime(joint) - 13f64.sqrt()).abs() < 1e-10);
    // one-sided continuity at the joint
    let h = 1e-12;
    assert!((m.sigma_tilde(joint - h) - m.sigma_tilde(joint + h)).abs() < 1e-10);
    assert!((m.sigma_tilde_prime(joint - h) - m.sigma_tilde_prime(joint + h)).abs() < 1e-10);
    assert_eq!(m.sigma_tilde(0.0), 0.0);
    // linear near 0
    let k = m.linear_slope;
    for s in [1e-3, 0.1, m.s_a] {
        assert!((m.sigma_tilde(s) - k * s).abs() < 1e-14);
    }
    let mut min_gap = f64::INFINITY;
    for i in 0..10_000 {
        let s = 0.01 + (joint - 0.02) * i as f64 / 9999.0;
        min_gap = min_gap.min(m.sigma_tilde(s) - glued(s));
    }
    assert!(min_gap > 0.0);
    for s in [joint, joint + 0.5, 5.0, 12.0] {
        assert_eq!(m.sigma_tilde(s), p.sigma(s));
    }
}

#[test]
fn modified_profile_parabolicity() {
    let p = test_profile();
    for r in [0.05, 0.5, 1.0, 1.125, 2.0, 2.24] {
        let m = p.modify(r).unwrap();
        assert!(m.theta_lo > 0.0);
        let top = p.s_max * p.s_max;
        for i in 0..10_000 {
            let s = top * i as f64 / 9999.0;
            let para = m.para(s);
            assert!(para >= m.theta_lo * (1.0 - 1e-12) && para <= m.theta_hi * (1.0 + 1e-12), "r={r} s={s} para={para}");
            let d = m.sigma_tilde_prime(s.sqrt());
            assert!((para - d).abs() <= 1e-9 * (1.0 + d.abs()));
        }
    }
}

#[test]
fn modify_rejects_bad_levels() {
    let p = test_profile();
    assert!(p.modify(2.25).is_err());
    assert!(p.modify(0.0).is_err());
}

#[test]
fn single_precision_profile() {
    let p = Profile::<f32>::quadratic_glued();
    let b = p.branch_inverses(1.0).unwrap();
    assert!((b.s_plus_r - 3.302_776).abs() < 1e-5);
    assert!((b.s_minus1_r - 0.381_966).abs() < 1e-5);
}

fn rotate(v: VecN<f64>, th: f64) -> VecN<f64> {
    v.rotated(th)
}

proptest! {
    #[test]
    fn collinear_identities(r in 0.001f64..2.249, th in 0.0f64..6.283) {
        let p = test_profile();
        let b = p.branch_inverses(r).unwrap();
        let e = VecN::new2(th.cos(), th.sin());
        for s in [b.s_plus_r, -b.s_minus1_r, -b.s_minus2_r] {
            let f = p.flux(e * s);
            prop_assert!((f - e * r).norm() < 1e-10);
        }
    }

    #[test]
    fn rotational_equivariance(x in -6.0f64..6.0, y in -6.0f64..6.0, th in 0.0f64..6.283) {
        let p = test_profile();
        let v = VecN::new2(x, y);
        let lhs = p.flux(rotate(v, th));
        let rhs = rotate(p.flux(v), th);
        prop_assert!((lhs - rhs).norm() <= 1e-13 * (1.0 + p.flux(v).norm()));
    }

    #[test]
    fn fourier_sign_pattern(rad in 0.0f64..10.0, th in 0.0f64..6.283) {
        let p = test_profile();
        let v = VecN::new2(rad * th.cos(), rad * th.sin());
        let dot = p.flux(v).dot(&v);
        if rad > 1e-9 && rad < 3.0 - 1e-9 {
            prop_assert!(dot < 0.0);
        } else if rad > 3.0 + 1e-9 {
            prop_assert!(dot > 0.0);
        }
    }

    #[test]
    fn modified_dominates_below_joint(r in 0.01f64..2.24, frac in 0.0001f64..0.9999) {
        let p = test_profile();
        let m = p.modify(r).unwrap();
        let s = m.joint * frac;
        prop_assert!(m.sigma_tilde(s) > p.sigma(s));
    }
}

#[test]
fn zero_and_equality_points_of_the_sign_pattern() {
    let p = test_profile();
    assert_eq!(p.flux(VecN::new2(0.0, 0.0)).dot(&VecN::new2(0.0, 0.0)), 0.0);
    let v = VecN::new2(3.0, 0.0);
    assert_eq!(p.flux(v).dot(&v), 0.0);
}
