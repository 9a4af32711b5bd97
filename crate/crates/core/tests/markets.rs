use assetflow::analysis::{self, ContagionOptions, SurfaceOptions};
use assetflow::bifurcation::{self, ScanOptions};
use assetflow::equilibrium;
use assetflow::integrator::{IntegratorSettings, Trajectory};
use assetflow::model::{ExecMode, Layout, ModelConfig, SellRule};
use assetflow::scenarios::load_scenario;
use assetflow::spectral::{Classification, JacobianKind};

fn two_by_two(cross: f64) -> ModelConfig {
    let alpha = vec![vec![vec![1.0, cross], vec![cross, 1.0]]; 2];
    let beta = vec![vec![vec![0.5, cross], vec![cross, 0.5]]; 2];
    ModelConfig {
        m: 2,
        n: 2,
        tau: vec![1.0; 2],
        pa: vec![10.0; 2],
        c1: vec![vec![0.5; 2]; 2],
        c2: vec![vec![0.5; 2]; 2],
        q1: vec![vec![0.1; 2], vec![0.3; 2]],
        q2: vec![vec![0.3; 2], vec![0.1; 2]],
        a: vec![vec![0.2; 2]; 2],
        b: vec![vec![0.1; 2]; 2],
        alpha,
        beta,
        sell_rule: SellRule::LinearValue { ctilde: vec![vec![0.2; 2]; 2], dtilde: vec![vec![0.02; 2]; 2] },
        m0: 1.0,
        n0: vec![1.0; 2],
        exec_mode: ExecMode::RationedClearing,
        rescale_buy_rates: false,
    }
}

fn synthetic(times: &[f64], f: impl Fn(f64) -> f64) -> Trajectory {
    let layout = Layout { m: 1, n: 1 };
    Trajectory {
        layout,
        m0: 1.0,
        n0: vec![1.0],
        times: times.to_vec(),
        states: times.iter().map(|&t| vec![f(t), 1.0, 1.0, 0.0, 0.0]).collect(),
        diagnostics: Default::default(),
    }
}

#[test]
fn excursion_of_simple_series() {
    let times: Vec<f64> = (0..=1000).map(|k| k as f64 * 0.1).collect();
    assert_eq!(analysis::excursion(&synthetic(&times, |_| 80.0), 0).unwrap(), 0.0);
    let e = analysis::excursion(&synthetic(&times, |t| 80.0 + 5.0 * (0.45 * t).sin()), 0).unwrap();
    assert!((e - 5.0).abs() < 5.0 * (1.0 - (0.45f64 * 0.05).cos()) + 1e-12, "{e}");
}

#[test]
fn cycle_period_is_grid_invariant() {
    let f = |t: f64| 80.0 + 3.0 * (2.0 * std::f64::consts::PI * t / 13.7).sin();
    let coarse: Vec<f64> = (0..=3000).map(|k| k as f64 * 0.1).collect();
    let fine: Vec<f64> = (0..=6000).map(|k| k as f64 * 0.05).collect();
    let a = bifurcation::cycle_metrics(&synthetic(&coarse, f), 0).unwrap().period.unwrap();
    let b = bifurcation::cycle_metrics(&synthetic(&fine, f), 0).unwrap().period.unwrap();
    assert!((a - b).abs() / b < 0.005);
    assert!((b - 13.7).abs() < 0.05);
}

#[test]
fn hopf_threshold_errors() {
    let sc = load_scenario("bulut-mixed").unwrap();
    assert!(matches!(
        bifurcation::find_hopf_threshold(&sc, "q1_2", 0.1, 0.5, 1e-6, JacobianKind::Reduced),
        Err(bifurcation::BifurcationError::NoSignChange { .. })
    ));
    let h = bifurcation::find_hopf_threshold(&sc, "q1_2", 0.5, 1.5, 1e-6, JacobianKind::Reduced).unwrap();
    assert!((h.value - 1.0).abs() < 0.05);
    assert!(h.transversality > 0.0);
}

#[test]
fn scan_is_independent_of_thread_count() {
    let sc = load_scenario("bulut-mixed").unwrap();
    let grid = [0.6, 0.9, 1.1];
    let opts = ScanOptions::default();
    let par = bifurcation::bifurcation_scan(&sc, "q1_2", &grid, &opts).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let ser = pool.install(|| bifurcation::bifurcation_scan(&sc, "q1_2", &grid, &opts).unwrap());
    for (a, b) in par.nodes.iter().zip(&ser.nodes) {
        assert_eq!(a.leading.to_bits(), b.leading.to_bits());
        assert_eq!(a.metrics, b.metrics);
    }
    assert_eq!(par.nodes[0].classification, Some(Classification::Stable));
    assert_eq!(par.nodes[2].classification, Some(Classification::Unstable));
    assert!(par.threshold.is_some());
    let mut csv = Vec::new();
    bifurcation::write_scan_csv(&par, &mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("parameter,leadingRe,amplitude,period,Pmax,Pmin"));
}

#[test]
fn decoupled_assets_do_not_transmit_shocks() {
    // each group trades one asset only, so neither sentiment nor cash links the two markets
    let mut cfg = two_by_two(0.0);
    for j in 0..2 {
        for i in 0..2 {
            if i != j {
                cfg.a[j][i] = 0.0;
                cfg.b[j][i] = 0.0;
            }
        }
    }
    cfg.calibrate_share_totals(&[0.5, 0.5]).unwrap();
    let eq = equilibrium::fundamental_equilibrium(&cfg, &[0.5, 0.5]).unwrap();
    let rep = analysis::contagion_matrix(&cfg, &eq, &ContagionOptions::default()).unwrap();
    assert!(rep.gamma[0][1].abs() < 1e-6 && rep.gamma[1][0].abs() < 1e-6, "{:?}", rep.gamma);
}

#[test]
fn symmetric_assets_respond_symmetrically() {
    let mut cfg = two_by_two(0.3);
    cfg.calibrate_share_totals(&[0.5, 0.5]).unwrap();
    let eq = equilibrium::fundamental_equilibrium(&cfg, &[0.5, 0.5]).unwrap();
    let rep = analysis::contagion_matrix(&cfg, &eq, &ContagionOptions::default()).unwrap();
    assert_eq!(rep.gamma[0][0], 0.0);
    assert!((rep.gamma[0][1] - rep.gamma[1][0]).abs() < 1e-6, "{:?}", rep.gamma);
    assert!(rep.gamma[0][1].abs() < 1e-3, "stable markets settle before the window: {:?}", rep.gamma);
}

#[test]
fn surface_origin_at_stable_point_does_not_move() {
    let sc = load_scenario("cavani-nigeria-libya").unwrap().with_param("q1_china", 0.2).unwrap();
    let eq = sc.base_equilibrium().unwrap();
    let opts = SurfaceOptions { grid_1: vec![0.0, 5.0], grid_2: vec![0.0], seed_fraction: 0.0, horizon: 60.0, ..Default::default() };
    let res = analysis::excursion_surface(&sc.config, &eq, &opts);
    let origin = res.nodes[0].report.as_ref().unwrap();
    // adaptive steps at a rest point only guarantee the local error tolerance, rel_tol·Pa ≈ 8e-5
    assert!(origin.e_max < 8e-5, "{:?}", origin);
    let kicked = res.nodes[1].report.as_ref().unwrap();
    assert!(kicked.excursion[0] >= 5.0 - 1e-9);
    for (i, row) in kicked.correlation.iter().enumerate() {
        assert_eq!(row[i], 1.0);
        for (k, v) in row.iter().enumerate() {
            assert_eq!(*v, kicked.correlation[k][i]);
            assert!(v.abs() <= 1.0);
        }
    }
    assert!((kicked.e_agg - kicked.excursion.iter().map(|e| e * e).sum::<f64>().sqrt()).abs() < 1e-12);
}

#[test]
fn bulut_oscillation_grows_above_threshold() {
    let sc = load_scenario("bulut-mixed").unwrap().with_param("q1_2", 1.05).unwrap();
    let eq = sc.base_equilibrium().unwrap();
    let traj = assetflow::integrator::integrate(&sc.config, &bifurcation::seeded_state(&eq, 0.01), &IntegratorSettings::horizon(600.0, 0.1)).unwrap();
    let early = bifurcation::cycle_metrics(&traj.between(0.0, 150.0), 0).unwrap();
    let late = bifurcation::cycle_metrics(&traj.tail_from(450.0), 0).unwrap();
    assert!(late.amplitude > early.amplitude);
    assert!((late.period.unwrap() - 2.0 * std::f64::consts::PI).abs() < 0.5);
}
