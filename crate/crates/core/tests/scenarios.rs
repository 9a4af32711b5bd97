use assetflow::equilibrium::{self, EquilibriumError};
use assetflow::model::SellRule;
use assetflow::scenarios::{load_scenario, preset_names, ScenarioError};

#[test]
fn single_asset_case_one() {
    let sc = load_scenario("desantis-case1").unwrap();
    let c = &sc.config;
    assert_eq!((c.m, c.n), (1, 2));
    assert_eq!(c.pa, vec![0.8]);
    assert_eq!(c.q1[0][0], 1.0);
    assert_eq!(c.q2[1][0], 1.0);
    assert_eq!((c.c1[0][0], c.c2[1][0]), (1.0, 1.0));
    assert_eq!(c.sell_rule, SellRule::ZeroSum);
}

#[test]
fn oil_market_preset() {
    let sc = load_scenario("cavani-nigeria-libya").unwrap();
    let c = &sc.config;
    assert_eq!((c.m, c.n), (2, 2));
    assert_eq!(c.pa, vec![80.0, 80.0]);
    assert_eq!(sc.param("b_china").unwrap().get(c).unwrap(), 2.5);
    assert_eq!(sc.param("d_usa").unwrap().get(c).unwrap(), 0.01);
    assert_eq!(sc.param("alpha").unwrap().get(c).unwrap(), 3.0);
    let split = sc.provenance.iter().find(|p| p.parameter == "market share split").unwrap();
    assert!(split.source.starts_with("cited"));
}

#[test]
fn every_preset_documents_provenance() {
    for name in preset_names() {
        let sc = load_scenario(&name).unwrap();
        assert!(!sc.provenance.is_empty(), "{name}");
        for p in &sc.provenance {
            assert!(["cited", "default-chosen", "derived"].iter().any(|t| p.source.starts_with(t)), "{name}: {}", p.source);
        }
    }
}

#[test]
fn single_asset_presets_have_no_fundamental_point() {
    let sc = load_scenario("desantis-case1").unwrap();
    match equilibrium::fundamental_equilibrium(&sc.config, &[0.5, 0.5]) {
        Err(EquilibriumError::CalibrationInfeasible { .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn schema_errors_carry_paths() {
    let text = assetflow::scenarios::PRESETS[3].1.replace("\"tau\"", "\"tau_days\"");
    match assetflow::scenarios::parse_scenario(&text) {
        Err(ScenarioError::Schema { path, .. }) => assert!(path.starts_with("config"), "{path}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn overrides_recalibrate_share_totals() {
    let sc = load_scenario("cavani-nigeria-libya").unwrap();
    let s2 = sc.with_param("k0_china", 0.3).unwrap();
    assert_ne!(s2.config.n0, sc.config.n0);
    assert!(s2.base_equilibrium().unwrap().residual < 1e-10);
}
