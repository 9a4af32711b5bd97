use std::path::Path;

fn run(args: &[&str], out: &Path) -> u8 {
    let mut argv: Vec<String> = vec!["assetflow".into()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.push("--out".into());
    argv.push(out.to_string_lossy().into_owned());
    super::run(argv)
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn simulate_flags_unstable_point_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = ["simulate", "--scenario", "bulut-mixed", "--set", "q1_2=1.005", "--horizon", "100"];
    assert!(run(&args, &a) == 0);
    assert!(run(&args, &b) == 0);
    let ma = manifest(&a);
    assert_eq!(ma["summary"]["classification"], "Unstable");
    assert_eq!(ma["config_sha256"], manifest(&b)["config_sha256"]);
    let csv_a = std::fs::read(a.join("trajectory.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("trajectory.csv")).unwrap());
    assert!(String::from_utf8_lossy(&csv_a).starts_with("time,P_1"));
    assert_eq!(ma["outputs"][0]["path"], "trajectory.csv");
}

#[test]
fn equilibria_on_case_one_are_all_stable() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run(&["equilibria", "--scenario", "desantis-case1", "--grid", "50"], tmp.path()) == 0);
    let m = manifest(tmp.path());
    assert_eq!(m["summary"]["classifications"]["Stable"], 50);
    assert_eq!(m["summary"]["classifications"].as_object().unwrap().len(), 1);
}

#[test]
fn scan_writes_table_and_plot_script() {
    let tmp = tempfile::tempdir().unwrap();
    let code = run(&["scan", "--scenario", "cavani-nigeria-libya", "--param", "q1_china", "--from", "0.2", "--to", "1.0", "--steps", "5", "--horizon", "100"], tmp.path());
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(tmp.path().join("scan.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(tmp.path().join("scan.gp").exists());
    let t = manifest(tmp.path())["summary"]["threshold"]["value"].as_f64().unwrap();
    assert!((0.3..0.45).contains(&t));
}

#[test]
fn usage_and_domain_errors_have_distinct_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(super::run(["assetflow", "simulate", "--bogus"]), 2);
    assert_eq!(super::run(["assetflow", "frobnicate"]), 2);
    assert_eq!(run(&["simulate", "--scenario", "no-such-preset"], tmp.path()), 1);
    assert_eq!(run(&["simulate", "--set", "q1_china"], tmp.path()), 1);
    assert_eq!(run(&["scan", "--param", "q1_china", "--from", "1.0", "--to", "0.2"], tmp.path()), 1);
}

#[test]
fn calibrate_from_problem_file() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csv = String::from("time,p1,p2\n");
    for k in 1..=5 {
        csv.push_str(&format!("{k},80,80\n"));
    }
    std::fs::write(tmp.path().join("obs.csv"), csv).unwrap();
    let problem = serde_json::json!({
        "scenario": "cavani-nigeria-libya",
        "set": { "q1_china": 0.3 },
        "free": [{ "name": "k0_usa", "lo": 0.05, "hi": 0.4 }],
        "observations_csv": "obs.csv",
        "fit": { "restarts": 1, "max_evals": 20, "initial_perturbation": 0.0, "seed": 1 }
    });
    let path = tmp.path().join("problem.json");
    std::fs::write(&path, problem.to_string()).unwrap();
    assert_eq!(run(&["calibrate", "--problem", path.to_str().unwrap()], &tmp.path().join("out")), 0);
    let res: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/calibration.json")).unwrap()).unwrap();
    // observations sit at the fundamental value, which every share split reproduces exactly
    assert!(res["loss"].as_f64().unwrap() < 1e-12);
}

#[test]
fn validate_writes_a_table() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["validate", "--criteria", "3,12", "--no-smoke"], tmp.path()), 0);
    let rows: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("validate.json")).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert_eq!(manifest(tmp.path())["summary"]["failed"], 0);
}
