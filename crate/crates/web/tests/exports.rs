use lbvt_web::{shipped_config_json, solve_json, torque_profile_json, trigger_curve_json};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn trigger_curve_reports_a_plateau() {
    let v = parse(&trigger_curve_json("", -88.0, 50.0, 0.5).unwrap());
    assert_eq!(v["force"].as_array().unwrap().len(), 101);
    assert_eq!(v["diameter"].as_array().unwrap().len(), 101);
    let end = v["plateau_end"].as_f64().unwrap();
    assert!(end >= v["trigger"].as_f64().unwrap() - 0.5);
}

#[test]
fn torque_profile_covers_the_range() {
    let v = parse(&torque_profile_json("", 165.0, 10.0).unwrap());
    let theta = v["theta"].as_array().unwrap();
    assert_eq!(theta.len(), 11);
    assert_eq!(theta[0].as_f64(), Some(-141.0));
    assert_eq!(theta[10].as_f64(), Some(-39.5));
    assert!(v["lbvt_torque"].as_array().unwrap().iter().all(|t| t.as_f64().unwrap() > 0.0));
}

#[test]
fn solve_returns_the_pose() {
    let v = parse(&solve_json("", -88.0, 0.0).unwrap());
    assert_eq!(v["regimes"], "CCCCCC");
    assert_eq!(v["kfe_torque"].as_f64(), Some(0.0));
    assert_eq!(v["joints"].as_array().unwrap().len(), 6);
    assert!(v["tip"]["x"].is_number());
    let loaded = parse(&solve_json("", -88.0, 165.0).unwrap());
    assert!(loaded["converged"].as_bool().unwrap());
    assert!(loaded["l4"].as_f64().unwrap() > v["l4"].as_f64().unwrap());
}

#[test]
fn explicit_config_matches_the_default() {
    let text = shipped_config_json();
    assert_eq!(solve_json(&text, -70.0, 80.0).unwrap(), solve_json("", -70.0, 80.0).unwrap());
}

#[test]
fn bad_input_is_an_error_message() {
    let err = solve_json("{\"l1\": \"x\"}", -88.0, 10.0).unwrap_err();
    assert!(err.contains("l1"), "{err}");
    let mut doc = parse(&shipped_config_json());
    doc["k_spring"] = Value::from(-1.0);
    let err = solve_json(&doc.to_string(), -88.0, 10.0).unwrap_err();
    assert!(err.starts_with("invalid config"), "{err}");
    assert!(solve_json("", -10.0, 10.0).is_err());
    assert!(trigger_curve_json("", -88.0, 1e9, 0.5).is_err());
}
