use assetflow::eigen;
use assetflow::equilibrium;
use assetflow::scenarios::load_scenario;
use assetflow::spectral::{self, JacobianKind};
use assetflow::validation::{constructed_matrix, spectrum_distance};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constructed_spectra_are_recovered(seed in any::<u64>(), dim in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, ev) = constructed_matrix(&mut rng, dim);
        let got = eigen::eigenvalues(&a).unwrap();
        prop_assert!(spectrum_distance(&ev, &got) < 1e-8);
        let tr: f64 = got.iter().map(|z| z.re).sum();
        prop_assert!((tr - a.trace()).abs() < 1e-9);
        let im: f64 = got.iter().map(|z| z.im).sum();
        prop_assert!(im.abs() < 1e-9);
    }

    #[test]
    fn routh_hurwitz_matches_roots(a2 in -3.0..3.0f64, a1 in -3.0..3.0f64, a0 in -3.0..3.0f64) {
        let rh = spectral::routh_hurwitz_cubic(1.0, a2, a1, a0);
        prop_assume!(rh.hopf_margin.abs() > 1e-6 && a0.abs() > 1e-6);
        let comp = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, -a0, 1.0, 0.0, -a1, 0.0, 1.0, -a2]);
        let stable = eigen::eigenvalues(&comp).unwrap().iter().all(|z| z.re < 0.0);
        prop_assert_eq!(stable, rh.stable);
    }

    #[test]
    fn char_poly_roots_are_eigenvalues(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, ev) = constructed_matrix(&mut rng, 3);
        let c = spectral::char_poly_3x3(&a);
        for z in ev {
            let v = ((z * c[0] + c[1]) * z + c[2]) * z + c[3];
            prop_assert!(v.norm() < 1e-9);
        }
    }
}

#[test]
fn defective_and_repeated_eigenvalues() {
    let jordan = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.0, 2.0, 1.0, 0.0, 0.0, 2.0]);
    let ev = eigen::eigenvalues(&jordan).unwrap();
    for z in ev {
        assert!((z.re - 2.0).abs() < 1e-4 && z.im.abs() < 1e-4);
    }
    let ev = eigen::eigenvalues(&DMatrix::identity(5, 5)).unwrap();
    assert!(ev.iter().all(|z| (z.re - 1.0).abs() < 1e-14));
}

/// Sentiment rows of the Jacobian: value sentiment depends only on its own price and itself,
/// while trend sentiment inherits `c1·q1/P` times the price row.
#[test]
fn sentiment_rows_have_the_derived_structure() {
    for name in ["bulut-mixed", "cavani-nigeria-libya"] {
        let sc = load_scenario(name).unwrap();
        let cfg = &sc.config;
        let eq = sc.base_equilibrium().unwrap();
        let j = spectral::jacobian_full(cfg, &eq).unwrap();
        let lay = cfg.layout();
        let d = lay.dim();
        for g in 0..cfg.n {
            for i in 0..cfg.m {
                let r2 = lay.z2(g, i);
                for c in 0..d {
                    let expect = if c == r2 {
                        -cfg.c2[g][i]
                    } else if c == lay.price(i) {
                        -cfg.c2[g][i] * cfg.q2[g][i] / cfg.pa[i]
                    } else {
                        0.0
                    };
                    assert!((j[(r2, c)] - expect).abs() < 1e-7, "{name} zeta2 row ({g},{i}) col {c}");
                }
                let r1 = lay.z1(g, i);
                let k = cfg.c1[g][i] * cfg.q1[g][i] / eq.state.price(i);
                for c in 0..d {
                    let self_term = if c == r1 { -cfg.c1[g][i] } else { 0.0 };
                    let expect = k * j[(lay.price(i), c)] + self_term;
                    assert!((j[(r1, c)] - expect).abs() < 1e-6, "{name} zeta1 row ({g},{i}) col {c}");
                }
            }
        }
    }
}

/// Conservation gives `m + 1` null directions; every group's cash-share balance adds another.
#[test]
fn full_jacobian_zero_modes_count_groups() {
    for (name, expected) in [("bulut-mixed", 3), ("cavani-nigeria-libya", 4)] {
        let sc = load_scenario(name).unwrap();
        let rep = spectral::full_spectrum(&sc.config, &sc.base_equilibrium().unwrap()).unwrap();
        assert_eq!(rep.zero_modes, expected, "{name}");
        assert_eq!(rep.zero_modes, sc.config.m + sc.config.n);
    }
}

#[test]
fn reduced_and_full_agree_on_nonzero_leading_pair() {
    let sc = load_scenario("cavani-nigeria-libya").unwrap();
    for q in [0.25, 0.45] {
        let s = sc.with_param("q1_china", q).unwrap();
        let eq = s.base_equilibrium().unwrap();
        let f = spectral::full_spectrum(&s.config, &eq).unwrap();
        let r = spectral::reduced_spectrum(&s.config, &eq).unwrap();
        assert_eq!(f.classification, r.classification);
        assert!((f.leading - r.leading).abs() < 1e-6);
        assert_eq!(r.jacobian_kind, JacobianKind::Reduced);
    }
}

#[test]
fn jacobian_rejects_non_equilibria() {
    let sc = load_scenario("bulut-mixed").unwrap();
    let mut eq = sc.base_equilibrium().unwrap();
    eq.state.set_price(0, 1.5);
    eq.residual = assetflow::model::rhs(&sc.config, &eq.state).unwrap().max_norm();
    assert!(matches!(spectral::jacobian_full(&sc.config, &eq), Err(spectral::SpectralError::NotAnEquilibrium(_))));
}

#[test]
fn single_asset_manifold_shapes() {
    let sc = load_scenario("desantis-case1").unwrap();
    let recs = equilibrium::manifold_scan(&sc.config, &equilibrium::two_group_grid(1.0, 50));
    let p: Vec<f64> = recs.iter().map(|r| r.point.as_ref().unwrap().state.price(0)).collect();
    assert!(p.windows(2).all(|w| w[1] > w[0]));
    assert!(recs.iter().all(|r| r.point.as_ref().unwrap().residual < 1e-9));
    let sc3 = load_scenario("desantis-case3").unwrap();
    let recs = equilibrium::manifold_scan(&sc3.config, &equilibrium::two_group_grid(1.0, 50));
    assert!(recs.iter().any(|r| r.classification == Some(spectral::Classification::Unstable)));
}
