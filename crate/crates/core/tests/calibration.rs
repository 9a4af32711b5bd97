use assetflow::calibration::{self, CalibrationError, EstimationProblem, FitSettings, FreeParam, Method, Observations, SmlSettings};
use assetflow::scenarios::load_scenario;
use assetflow::validation::{calibration_times, CALIBRATION_Q1, CALIBRATION_SHOCK};

fn problem(noise: f64) -> EstimationProblem {
    let sc = load_scenario("cavani-nigeria-libya").unwrap().with_param("q1_china", CALIBRATION_Q1).unwrap();
    let times = calibration_times();
    let observations = calibration::synthetic_observations(&sc, &["q1_china"], &[CALIBRATION_Q1], &times, CALIBRATION_SHOCK, noise, 3).unwrap();
    EstimationProblem {
        scenario: sc,
        free: vec![FreeParam { name: "q1_china".into(), lo: 0.1, hi: 1.2, truth: Some(CALIBRATION_Q1) }],
        observations,
        method: Method::Nls,
        sml: SmlSettings::default(),
        fit: FitSettings { initial_perturbation: CALIBRATION_SHOCK, restarts: 2, max_evals: 80, ..Default::default() },
    }
}

#[test]
fn truth_reproduces_noiseless_data() {
    let p = problem(0.0);
    let sim = calibration::simulate_observables(&p.scenario, &["q1_china"], &[CALIBRATION_Q1], &p.observations.times, CALIBRATION_SHOCK).unwrap();
    assert!(calibration::rmse(&p.observations, &sim).iter().all(|r| *r < 1e-12));
    for q in [0.2, 0.25, 0.35, 0.4] {
        let off = calibration::simulate_observables(&p.scenario, &["q1_china"], &[q], &p.observations.times, CALIBRATION_SHOCK).unwrap();
        assert!(calibration::sse(&p.observations, &off) > 1e-6, "q1 = {q}");
    }
}

#[test]
fn bad_problems_are_rejected() {
    let mut p = problem(0.0);
    p.free.clear();
    assert!(matches!(calibration::nls_fit(&p), Err(CalibrationError::NoFreeParameters)));

    let mut p = problem(0.0);
    p.free[0].hi = 0.0;
    assert!(matches!(calibration::nls_fit(&p), Err(CalibrationError::BadBounds { .. })));

    let mut p = problem(0.0);
    p.sml.simulations = 49;
    assert!(matches!(calibration::sml_fit(&p, 1), Err(CalibrationError::TooFewSimulations(49))));

    let mut p = problem(0.0);
    p.observations = Observations { times: vec![2.0, 1.0], prices: vec![vec![80.0; 2]; 2] };
    assert!(matches!(calibration::nls_fit(&p), Err(CalibrationError::BadTimes)));

    let mut p = problem(0.0);
    p.observations.prices.pop();
    assert!(matches!(calibration::nls_fit(&p), Err(CalibrationError::AssetMismatch { got: 1, expected: 2 })));

    let mut p = problem(0.0);
    p.free[0].name = "no_such_parameter".into();
    assert!(matches!(calibration::nls_fit(&p), Err(CalibrationError::Scenario(_))));
}

#[test]
fn least_squares_recovers_single_parameter() {
    let r = calibration::nls_fit(&problem(0.0)).unwrap();
    assert!(r.converged);
    assert!(r.parameters[0].rel_error.unwrap() < 0.01, "{r:?}");
    assert_eq!(r.restart_objectives.len(), 2);
}

#[test]
fn simulated_likelihood_is_seeded() {
    let mut p = problem(0.8);
    p.sml = SmlSettings { simulations: 50, noise: 0.8 };
    p.fit.max_evals = 40;
    let a = calibration::sml_fit(&p, 5).unwrap();
    let b = calibration::sml_fit(&p, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.method, Method::Sml);
}

#[test]
fn observations_read_from_csv() {
    let text = "time,p1,p2\n1,80.5,79.9\n2,80.1,80.2\n";
    let obs = Observations::from_csv(text.as_bytes()).unwrap();
    assert_eq!(obs.times, vec![1.0, 2.0]);
    assert_eq!(obs.prices, vec![vec![80.5, 80.1], vec![79.9, 80.2]]);
}
