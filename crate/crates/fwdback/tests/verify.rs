use fwdback::geometry::SolutionType;
use fwdback::parabolic::*;
use fwdback::profile::{ModifiedProfile, Profile};
use fwdback::verify::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn identity_flux(p: [f64; 2]) -> [f64; 2] {
    p
}

fn heat_state(n: usize, nt: usize, t_end: f64) -> (GridST, BoundaryFunctionPair) {
    let grid = GridST::new_1d(n, 1.0, nt, t_end).unwrap();
    let u0 = grid.cell_averages(|x, _| (PI * x).cos());
    let pair = boundary_function(&ConstantDiffusivity(1.0), &u0, &grid).unwrap();
    (grid, pair)
}

#[test]
fn heat_solution_has_small_weak_residual() {
    let (grid, pair) = heat_state(128, 1000, 0.1);
    let r = weak_residual(&grid, &pair.u_star, &identity_flux, &TestFunction::default_basis());
    assert!(r <= 5e-3, "weak residual {r}");
}

#[test]
fn constant_test_function_gives_mass_drift() {
    let grid = GridST::new_1d(32, 1.0, 10, 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = ScalarField { slices: (0..11).map(|_| (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect() };
    let one = [TestFunction { space: 0, time: 0 }];
    let r = weak_residual(&grid, &u, &identity_flux, &one);
    assert!((r - mass_drift(&grid, &u)).abs() <= 1e-14);
    assert!(r > 0.0);
}

#[test]
fn weak_residual_responds_linearly_to_a_bump() {
    let (grid, pair) = heat_state(64, 200, 0.05);
    let one = [TestFunction { space: 0, time: 0 }];
    let base = weak_residual(&grid, &pair.u_star, &identity_flux, &one);
    let mut u = pair.u_star.clone();
    let delta = 1e-3;
    u.slices[200][20] += delta;
    let r = weak_residual(&grid, &u, &identity_flux, &one);
    assert!(((r - base) - delta * grid.cell_volume()).abs() <= 1e-12, "{} vs {}", r - base, delta * grid.cell_volume());
}

#[test]
fn zero_state_reports_zeros_and_round_trips() {
    let grid = GridST::new_1d(16, 1.0, 8, 0.1).unwrap();
    let u = ScalarField::zeros(&grid);
    let v = VectorField::zeros(&grid);
    let p = Profile::quadratic_glued();
    let mags = gradient_magnitudes(&grid, &gradient_field(&grid, &u));
    let part = partition_domain(&mags, 1.125, &p).unwrap();
    let rep = full_report(&ReportInput {
        grid: &grid,
        u: &u,
        v: &v,
        partition: &part,
        profile: &p,
        r_tilde: 1.125,
        solution_type: SolutionType::TypeI,
        pass_index: 0,
    })
    .unwrap();
    assert_eq!(rep.weak_residual, 0.0);
    assert_eq!(rep.mass_drift, 0.0);
    assert_eq!(rep.flux_residual, 0.0);
    assert!(rep.set_residuals.values().all(|v| *v == 0.0));
    assert_eq!(rep.caps.ut, 0.0);
    assert!(rep.is_valid());
    let json = serde_json::to_string(&rep).unwrap();
    let back: VerificationReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, rep);
    for key in ["weak_residual", "mass_drift", "flux_residual", "set_residuals", "caps", "pass_index"] {
        assert!(json.contains(&format!("\"{key}\"")), "missing {key}");
    }
}

fn modified_state() -> (GridST, Profile<f64>, ModifiedProfile<f64>, BoundaryFunctionPair) {
    let p = Profile::quadratic_glued();
    let m = ModifiedProfile::new(&p, 1.125).unwrap();
    let grid = GridST::new_1d(128, 1.0, 128, 0.3).unwrap();
    let u0 = grid.cell_averages(|x, _| 1.2 * (PI * x).cos());
    let pair = boundary_function(&m, &u0, &grid).unwrap();
    (grid, p, m, pair)
}

#[test]
fn initial_flux_residual_is_the_modification_gap() {
    let (grid, p, m, pair) = modified_state();
    let measured = flux_residual(&grid, &pair.u_star, &pair.v_star, &p);
    // quadrature of |σ̃ − σ| at the discrete gradients
    let gap: Vec<Vec<f64>> = gradient_magnitudes(&grid, &pair.du_star)
        .iter()
        .map(|s| s.iter().map(|&g| (m.sigma_tilde(g) - p.sigma(g)).abs()).collect())
        .collect();
    let oracle = integrate_nodes(&grid, &gap, None);
    assert!(oracle > 0.0);
    assert!((measured - oracle).abs() <= 0.05 * oracle, "{measured} vs {oracle}");
}

#[test]
fn residuals_ignore_constant_shifts_of_v() {
    let (grid, p, _, pair) = modified_state();
    let mags = gradient_magnitudes(&grid, &pair.du_star);
    let part = partition_domain(&mags, 1.125, &p).unwrap();
    let mut shifted = pair.v_star.clone();
    for s in &mut shifted.x {
        s.iter_mut().for_each(|v| *v += 0.37);
    }
    let rep = |v: &VectorField| {
        full_report(&ReportInput {
            grid: &grid,
            u: &pair.u_star,
            v,
            partition: &part,
            profile: &p,
            r_tilde: 1.125,
            solution_type: SolutionType::TypeI,
            pass_index: 0,
        })
        .unwrap()
    };
    let (a, b) = (rep(&pair.v_star), rep(&shifted));
    assert!((a.flux_residual - b.flux_residual).abs() <= 1e-12);
    assert!((a.set_residuals["below"] - b.set_residuals["below"]).abs() <= 1e-12);
    assert_eq!(a.weak_residual, b.weak_residual);
}

#[test]
fn classical_region_has_zero_flux_gap() {
    let (grid, p, _, pair) = modified_state();
    let mags = gradient_magnitudes(&grid, &pair.du_star);
    let part = partition_domain(&mags, 1.125, &p).unwrap();
    let a = profile_flux(&p);
    let gap = flux_gap(&grid, &pair.u_star, &pair.v_star, &a);
    // past the first level v*_t is the step flux, which equals σ(|Du*|) there
    let above: Vec<bool> = (0..part.regions.len()).map(|idx| idx >= part.nodes && part.regions[idx] == Region::Above).collect();
    let on_above = integrate_nodes(&grid, &gap, Some(&above));
    assert!(mask_measure(&grid, &above) > 0.0);
    assert!(on_above <= 1e-9, "{on_above}");
}

#[test]
fn distance_to_graph_matches_brute_force() {
    let p = Profile::quadratic_glued();
    let bands = graph_bands(&p, 1.125, SolutionType::TypeII).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let pt = [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)];
        let beta = [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)];
        let d = distance_to_graph(&p, pt, beta, &bands);
        let mut brute = f64::INFINITY;
        for &(lo, hi) in &bands {
            for i in 0..=2000 {
                let r = lo + (hi - lo) * i as f64 / 2000.0;
                let s = p.sigma(r);
                for j in 0..720 {
                    let th = j as f64 * PI / 360.0;
                    let (c, sn) = (th.cos(), th.sin());
                    let e = ((pt[0] - r * c).powi(2) + (pt[1] - r * sn).powi(2) + (beta[0] - s * c).powi(2) + (beta[1] - s * sn).powi(2)).sqrt();
                    brute = brute.min(e);
                }
            }
        }
        assert!(d <= brute + 1e-9, "{d} vs {brute}");
        assert!(d >= brute - 2e-2, "{d} vs {brute}");
    }
}

#[test]
fn points_of_the_graph_have_zero_distance() {
    let p = Profile::quadratic_glued();
    let bi = p.branch_inverses(1.125).unwrap();
    let bands = graph_bands(&p, 1.125, SolutionType::TypeI).unwrap();
    for r in [bi.s_minus2_r, 0.5 * (bi.s_minus2_r + bi.s_plus_r), bi.s_plus_r] {
        let th: f64 = 0.7;
        let z = [th.cos(), th.sin()];
        let d = distance_to_graph(&p, [r * z[0], r * z[1]], [p.sigma(r) * z[0], p.sigma(r) * z[1]], &bands);
        assert!(d <= 1e-6, "r={r}: {d}");
    }
    // the midpoint of a collinear pair is not on the graph
    let mid = 0.5 * (bi.s_plus_r - bi.s_minus2_r);
    assert!(distance_to_graph(&p, [mid, 0.0], [1.125, 0.0], &bands) > 0.1);
}

#[test]
fn manufactured_band_gradient_has_zero_band_distance() {
    let p = Profile::quadratic_glued();
    let bi = p.branch_inverses(1.125).unwrap();
    let grid = GridST::new_1d(16, 1.0, 4, 0.1).unwrap();
    let slope = bi.s_minus2_r;
    let u = ScalarField { slices: vec![(0..16).map(|i| slope * (i as f64 + 0.5) / 16.0).collect(); 5] };
    let v = VectorField::zeros(&grid);
    let mags = gradient_magnitudes(&grid, &gradient_field(&grid, &u));
    let part = partition_domain(&mags, 1.125, &p).unwrap();
    let rep = set_distance_report(&grid, &u, &v, &part, 1.125, &p, SolutionType::TypeI).unwrap();
    assert!(rep.band_max <= 1e-12, "{rep:?}");
    let rep2 = set_distance_report(&grid, &u, &v, &part, 1.125, &p, SolutionType::TypeII).unwrap();
    assert!(rep2.band_max > 0.1);
}

#[test]
fn flux_residual_is_rotation_equivariant() {
    let p = Profile::quadratic_glued();
    let m = ModifiedProfile::new(&p, 1.125).unwrap();
    let grid = GridST::new_2d(20, 20, 1.0, 1.0, 10, 0.05).unwrap();
    let u0 = grid.cell_averages(|x, y| (PI * x).cos() + 0.3 * (PI * y).cos());
    let pair = boundary_function(&m, &u0, &grid).unwrap();
    // quarter turn of the square: (x, y) → (y, 1 − x)... realised by transposing and flipping
    let n = 20;
    let rot_u = ScalarField {
        slices: pair.u_star.slices.iter().map(|s| (0..n * n).map(|c| {
            let (i, j) = (c % n, c / n);
            s[grid.cell(j, n - 1 - i)]
        }).collect()).collect(),
    };
    let mut rot_v = VectorField::zeros(&grid);
    for k in 0..grid.levels() {
        for j in 0..n {
            for i in 0..=n {
                // new x-normal component is minus the old y-normal one
                rot_v.x[k][grid.x_face(i, j)] = -pair.v_star.y[k][grid.y_face(j, n - i)];
            }
        }
        for j in 0..=n {
            for i in 0..n {
                rot_v.y[k][grid.y_face(i, j)] = pair.v_star.x[k][grid.x_face(j, n - 1 - i)];
            }
        }
    }
    let a = flux_residual(&grid, &pair.u_star, &pair.v_star, &p);
    let b = flux_residual(&grid, &rot_u, &rot_v, &p);
    assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{a} vs {b}");
}
