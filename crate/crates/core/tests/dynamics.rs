use assetflow::analysis;
use assetflow::integrator::{self, IntegratorSettings};
use assetflow::model::{self, ExecMode, StateVector};
use assetflow::scenarios::load_scenario;
use assetflow::validation::{bounds_violation, random_model};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn random_runs_stay_positive_and_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cfg, x0) = random_model(&mut rng);
        let settings = IntegratorSettings::horizon(50.0, 0.5);
        let traj = integrator::integrate(&cfg, &x0, &settings).unwrap();
        prop_assert_eq!(bounds_violation(&cfg, &traj, settings.abs_tol), None);
    }

    #[test]
    fn rationed_clearing_conserves_totals(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cfg, x0) = random_model(&mut rng);
        let traj = integrator::integrate(&cfg, &x0, &IntegratorSettings::horizon(50.0, 0.5)).unwrap();
        prop_assert!(integrator::drift_monitor(&traj).max() < 1e-9);
    }

    #[test]
    fn rhs_conserves_cash_and_shares_pointwise(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cfg, x0) = random_model(&mut rng);
        let dx = model::rhs(&cfg, &x0).unwrap();
        let cash: f64 = dx.cash_slice().iter().sum();
        prop_assert!(cash.abs() < 1e-12);
        for i in 0..cfg.m {
            let s: f64 = (0..cfg.n).map(|j| dx.shares(j, i)).sum();
            prop_assert!(s.abs() < 1e-12);
        }
    }
}

#[test]
fn as_written_mode_leaks_off_equilibrium() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut cfg, x0) = random_model(&mut rng);
    cfg.exec_mode = ExecMode::AsWritten;
    let dx = model::rhs(&cfg, &x0).unwrap();
    let leak: f64 = (0..cfg.m).map(|i| (0..cfg.n).map(|j| dx.shares(j, i)).sum::<f64>().abs()).sum();
    assert!(leak > 1e-6, "share flows balance only at clearing, leak {leak}");
}

#[test]
fn integration_is_deterministic() {
    let sc = load_scenario("cavani-nigeria-libya").unwrap();
    let eq = sc.base_equilibrium().unwrap();
    let x0 = assetflow::bifurcation::seeded_state(&eq, 0.01);
    let s = IntegratorSettings::horizon(60.0, 0.1);
    let a = integrator::integrate(&sc.config, &x0, &s).unwrap();
    let b = integrator::integrate(&sc.config, &x0, &s).unwrap();
    assert_eq!(a.states, b.states);
}

/// Closed-form sentiment memory evaluated by quadrature over a dense trajectory.
#[test]
fn sentiments_match_their_integral_form() {
    let sc = load_scenario("bulut-mixed").unwrap().with_param("q1_2", 0.9).unwrap();
    let cfg = &sc.config;
    let eq = sc.base_equilibrium().unwrap();
    let x0 = assetflow::bifurcation::seeded_state(&eq, 0.05);
    let dt = 0.005;
    let traj = integrator::integrate(cfg, &x0, &IntegratorSettings { abs_tol: 1e-11, rel_tol: 1e-10, ..IntegratorSettings::horizon(20.0, dt) })
        .unwrap();
    let (j, i) = (0, 1);
    let (c1, c2) = (cfg.c1[j][i], cfg.c2[j][i]);
    let t_end = *traj.times.last().unwrap();
    let mut z1 = x0.z1(j, i) * (-c1 * t_end).exp();
    let mut z2 = x0.z2(j, i) * (-c2 * t_end).exp();
    let weights = |k: usize| if k == 0 || k == traj.len() - 1 { 0.5 } else { 1.0 };
    for k in 0..traj.len() {
        let x = traj.state(k);
        let s = traj.times[k];
        let dx = model::rhs(cfg, &x).unwrap();
        let p = x.price(i);
        z1 += weights(k) * dt * c1 * cfg.q1[j][i] * (-c1 * (t_end - s)).exp() * dx.price(i) / p;
        z2 += weights(k) * dt * c2 * cfg.q2[j][i] * (-c2 * (t_end - s)).exp() * (1.0 - p / cfg.pa[i]);
    }
    let last = traj.last();
    assert!((z1 - last.z1(j, i)).abs() < 1e-6, "{z1} vs {}", last.z1(j, i));
    assert!((z2 - last.z2(j, i)).abs() < 1e-6, "{z2} vs {}", last.z2(j, i));
}

#[test]
fn wealth_identity_and_decomposition() {
    let sc = load_scenario("cavani-nigeria-libya").unwrap().with_param("q1_china", 0.3).unwrap();
    let cfg = &sc.config;
    let eq = sc.base_equilibrium().unwrap();
    let x0 = assetflow::bifurcation::seeded_state(&eq, 0.1);
    let traj = integrator::integrate(cfg, &x0, &IntegratorSettings::horizon(60.0, 0.01)).unwrap();
    let w = analysis::wealth_series(cfg, &traj).unwrap();
    for (k, st) in traj.states.iter().enumerate() {
        let x = StateVector { layout: traj.layout, data: st.clone() };
        let total: f64 = w.wealth[k].iter().sum();
        let expect = cfg.m0 + (0..cfg.m).map(|i| cfg.n0[i] * x.price(i)).sum::<f64>();
        assert!((total - expect).abs() <= 1e-6 * expect);
    }
    // capital gains alone reproduce dW/dt; adding the trading term double counts dM/dt
    let mut num = 0.0;
    let mut den = 0.0;
    let mut extra = 0.0;
    for k in 1..w.times.len() - 1 {
        for j in 0..cfg.n {
            num += (w.capital_gain[k][j] - w.dw_dt[k][j]).powi(2);
            den += w.dw_dt[k][j].powi(2);
            let sum = w.capital_gain[k][j] + w.trading[k][j];
            extra += (sum - w.dw_dt[k][j] - w.trading[k][j]).powi(2);
        }
    }
    assert!((num / den).sqrt() < 0.01, "relative RMS {}", (num / den).sqrt());
    assert!((extra / den).sqrt() < 0.01);
}

#[test]
fn equilibrium_wealth_is_constant() {
    let sc = load_scenario("bulut-mixed").unwrap();
    let eq = sc.base_equilibrium().unwrap();
    let traj = integrator::integrate(&sc.config, &eq.state, &IntegratorSettings::horizon(20.0, 1.0)).unwrap();
    let w = analysis::wealth_series(&sc.config, &traj).unwrap();
    for row in &w.wealth {
        for (a, b) in row.iter().zip(&w.wealth[0]) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn singular_supply_is_reported() {
    let sc = load_scenario("bulut-mixed").unwrap();
    let mut x = sc.base_equilibrium().unwrap().state;
    for j in 0..sc.config.n {
        for i in 0..sc.config.m {
            x.set_shares(j, i, 0.0);
        }
    }
    assert!(matches!(model::rhs(&sc.config, &x), Err(model::ModelError::SingularSupply { .. })));
}
