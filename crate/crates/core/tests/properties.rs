use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use monodomain_funnel::config::{parse_config, RunConfig};
use monodomain_funnel::fem::{assemble, boundary_output, Mesh};
use monodomain_funnel::funnel::{feedback, funnel_margin, norm, ControllerConfig, FunnelShape, FunnelSpec};
use monodomain_funnel::model::{energy_budget, Diffusion, ModelParams};
use monodomain_funnel::spectral::build_basis;

fn mesh_and_extent() -> impl Strategy<Value = (usize, usize, f64, f64)> {
    (1usize..12, 1usize..12, 0.2..3.0f64, 0.2..3.0f64)
}

proptest! {
    #[test]
    fn mass_matrix_integrates_affine_functions_exactly((nx, ny, lx, ly) in mesh_and_extent(), a in -5.0..5.0f64, b in -5.0..5.0f64) {
        let mesh = Mesh::new(nx, ny, (lx, ly)).unwrap();
        let ops = assemble(&mesh, &Diffusion::isotropic(0.015)).unwrap();
        let f = mesh.interpolate(|x, y| 1.0 + a * x + b * y);
        let exact = lx * ly * (1.0 + a * lx / 2.0 + b * ly / 2.0);
        prop_assert!((ops.integral(&f) - exact).abs() <= 1e-11 * (1.0 + exact.abs()));
        prop_assert!((ops.mass.sum() - lx * ly).abs() <= 1e-12 * lx * ly);
        // int (a x)^2 over the rectangle is reproduced only up to O(h^2), but M is exact for constants
        let one = vec![1.0; mesh.node_count()];
        prop_assert!((ops.l2_norm_sq(&one) - lx * ly).abs() <= 1e-12 * lx * ly);
    }

    #[test]
    fn stiffness_is_symmetric_and_annihilates_constants((nx, ny, lx, ly) in mesh_and_extent(), d in 1e-3..1.0f64, seed in any::<u64>()) {
        let mesh = Mesh::new(nx, ny, (lx, ly)).unwrap();
        let ops = assemble(&mesh, &Diffusion::isotropic(d)).unwrap();
        prop_assert!(ops.stiffness.asymmetry() <= 1e-14);
        let scale = ops.stiffness.row(0).map(|(_, v)| v.abs()).fold(0.0, f64::max);
        for r in ops.stiffness.row_sums() {
            prop_assert!(r.abs() <= 1e-12 * scale);
        }
        // positive semidefinite along a pseudo-random direction
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..mesh.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        prop_assert!(ops.stiffness.bilinear(&v, &v) >= -1e-12);
        // the energy of the affine function x is d * |Omega|
        let x = mesh.interpolate(|x, _| x);
        prop_assert!((ops.stiffness.bilinear(&x, &x) - d * lx * ly).abs() <= 1e-11 * d * lx * ly);
    }

    #[test]
    fn boundary_output_integrates_affine_traces((nx, ny, lx, ly) in mesh_and_extent(), a in -5.0..5.0f64) {
        let mesh = Mesh::new(nx, ny, (lx, ly)).unwrap();
        let out = boundary_output(&mesh);
        let y = out.apply(&mesh.interpolate(|x, _| 1.0 + a * x));
        // right, top, left, bottom
        let expected = [ly * (1.0 + a * lx), lx * (1.0 + a * lx / 2.0), ly, lx * (1.0 + a * lx / 2.0)];
        for (got, want) in y.iter().zip(expected) {
            prop_assert!((got - want).abs() <= 1e-11 * (1.0 + want.abs()), "{y:?} vs {expected:?}");
        }
    }

    #[test]
    fn spectral_synthesis_is_isometric(coeffs in prop::collection::vec(-3.0..3.0f64, 36)) {
        // cosines up to index 5 are exactly orthogonal on a 48-point midpoint grid
        let basis = build_basis(5, 5, &ModelParams::default()).unwrap();
        prop_assert_eq!(basis.len(), 36);
        let g = 48;
        let h = 1.0 / g as f64;
        let mut sq = 0.0;
        for i in 0..g {
            for j in 0..g {
                let v = basis.eval(&coeffs, (i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                sq += v * v * h * h;
            }
        }
        let parseval: f64 = coeffs.iter().map(|c| c * c).sum();
        prop_assert!((sq - parseval).abs() <= 1e-10 * (1.0 + parseval));
    }

    #[test]
    fn tanh_funnel_is_nondecreasing_and_bounded(gamma in 1e-3..5.0f64, tau in 0.1..500.0f64, t1 in 0.0..1000.0f64, t2 in 0.0..1000.0f64) {
        let spec = FunnelSpec { gamma, shape: FunnelShape::Tanh { tau } };
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let (a, b) = (spec.phi(lo).unwrap(), spec.phi(hi).unwrap());
        prop_assert!(a <= b);
        prop_assert!((0.0..=spec.phi_sup()).contains(&b));
        prop_assert_eq!(spec.radius(lo).is_unbounded(), lo <= gamma);
    }

    #[test]
    fn feedback_gain_grows_toward_the_boundary(e in prop::collection::vec(-1.0..1.0f64, 1..5), phi in 0.0..2.0f64, s1 in 0.0..1.0f64, s2 in 0.0..1.0f64) {
        let cfg = ControllerConfig::default();
        let n = norm(&e);
        prop_assume!(n > 1e-6);
        // scale e so that phi |e| runs over [0, 0.99)
        let reach = if phi > 0.0 { 0.99 / (phi * n) } else { 1.0 };
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        let at = |s: f64| {
            let es: Vec<f64> = e.iter().map(|x| x * s * reach).collect();
            let i = feedback(1.0, &es, phi, &cfg).unwrap();
            prop_assert!(funnel_margin(&es, phi) > 0.0);
            // the control opposes the error
            prop_assert!(i.iter().zip(&es).all(|(i, e)| i * e <= 0.0));
            Ok(norm(&i))
        };
        prop_assert!(at(lo)? <= at(hi)? * (1.0 + 1e-12));
    }

    #[test]
    fn energy_budget_is_monotone(y in 0.0..10.0f64, i in 0.0..100.0f64, k0 in 0.01..5.0f64, area in 0.1..4.0f64, bump in 0.0..1.0f64) {
        let p = ModelParams::default();
        let base = energy_budget(&p, y, i, k0, area).unwrap().c_infty;
        prop_assert!(base >= p.reaction_energy_floor(area));
        for c in [
            energy_budget(&p, y + bump, i, k0, area),
            energy_budget(&p, y, i + bump, k0, area),
            energy_budget(&p, y, i, k0 + bump, area),
            energy_budget(&p, y, i, k0, area + bump),
        ] {
            prop_assert!(c.unwrap().c_infty >= base);
        }
    }

    #[test]
    fn config_serialization_is_idempotent(k0 in 0.01..10.0f64, tau in 1.0..500.0f64, gamma in 0.01..1.0f64, n in 4usize..128, sample_dt in 0.001..1.0f64) {
        let mut cfg = RunConfig::default();
        cfg.controller.k0 = k0;
        cfg.funnel = FunnelSpec { gamma, shape: FunnelShape::Tanh { tau } };
        cfg.discretization.mesh = [n, n + 1];
        cfg.times.sample_dt = sample_dt;
        let text = cfg.to_toml().unwrap();
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml().unwrap(), text);
    }
}

#[test]
fn cubic_reaction_is_dissipative_everywhere() {
    // no nonzero rest state: p3(v) / v stays below -c1 + c2^2 / (4 c3)
    let p = ModelParams::default();
    let bound = -p.c1 + p.c2 * p.c2 / (4.0 * p.c3);
    assert!(bound < -1.2);
    for k in -4000..=4000 {
        let v = k as f64 * 0.05;
        if v != 0.0 {
            assert!(p.p3(v) / v <= bound + 1e-12, "v = {v}");
        }
    }
    assert_eq!(p.p3_sign_threshold(), 0.0);
}
