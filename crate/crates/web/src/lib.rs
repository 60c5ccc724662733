//! WebAssembly bindings for the browser demo.
//!
//! Every export takes a config as JSON text (empty for the shipped one) and
//! returns JSON text. Angles cross this boundary in degrees.

use lbvt::analysis::{plateau_end, sweep_torque_vs_angle, sweep_trigger};
use lbvt::config_file::parse_config;
use lbvt::equilibrium::{solve_equilibrium, triggering_force};
use lbvt::{validate_config, MechanismConfig};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Largest number of samples a single request may ask for.
pub const MAX_SAMPLES: f64 = 5000.0;

fn config(text: &str) -> Result<MechanismConfig, String> {
    if text.trim().is_empty() {
        return Ok(MechanismConfig::shipped());
    }
    let c = parse_config(text)?;
    let violations = validate_config(&c);
    if violations.is_empty() {
        Ok(c)
    } else {
        let lines: Vec<String> = violations.iter().map(ToString::to_string).collect();
        Err(format!("invalid config:\n{}", lines.join("\n")))
    }
}

fn check_samples(from: f64, to: f64, step: f64) -> Result<(), String> {
    if step > 0.0 && (to - from) / step > MAX_SAMPLES {
        return Err(format!("more than {MAX_SAMPLES} samples requested"));
    }
    Ok(())
}

fn numbers(v: &[f64]) -> Value {
    v.iter().map(|x| if x.is_finite() { json!(x) } else { Value::Null }).collect()
}

/// The shipped config, in the file format.
pub fn shipped_config_json() -> String {
    lbvt::config_file::SHIPPED_CONFIG.to_string()
}

/// Chain diameter and l4 against actuator force at a fixed angle.
pub fn trigger_curve_json(config_text: &str, theta_deg: f64, f_to: f64, step: f64) -> Result<String, String> {
    let c = config(config_text)?;
    check_samples(0.0, f_to, step)?;
    let theta = theta_deg.to_radians();
    let t = sweep_trigger(&c, theta, 0.0, f_to, step).map_err(|e| e.to_string())?;
    let col = |name: &str| t.values(name).map(numbers).map_err(|e| e.to_string());
    Ok(json!({
        "force": col("force")?,
        "diameter": col("diameter")?,
        "l4": col("l4")?,
        "regimes": t.labels("regimes").map_err(|e| e.to_string())?,
        "trigger": triggering_force(&c, theta).map_err(|e| e.to_string())?,
        "plateau_end": plateau_end(&t).map_err(|e| e.to_string())?,
    })
    .to_string())
}

/// LBVT and rigid-baseline torque across the configured angle range.
pub fn torque_profile_json(config_text: &str, force: f64, step_deg: f64) -> Result<String, String> {
    let c = config(config_text)?;
    check_samples(c.theta_min.to_degrees(), c.theta_max.to_degrees(), step_deg)?;
    let t = sweep_torque_vs_angle(&c, force, c.theta_min, c.theta_max, step_deg.to_radians())
        .map_err(|e| e.to_string())?;
    let col = |name: &str| t.values(name).map(numbers).map_err(|e| e.to_string());
    Ok(json!({
        "theta": col("theta")?,
        "lbvt_torque": col("lbvt_torque")?,
        "baseline_torque": col("baseline_torque")?,
        "amplification": col("amplification")?,
        "regimes": t.labels("regimes").map_err(|e| e.to_string())?,
    })
    .to_string())
}

/// One equilibrium, with the chain pose for drawing.
pub fn solve_json(config_text: &str, theta_deg: f64, force: f64) -> Result<String, String> {
    let c = config(config_text)?;
    let r = solve_equilibrium(&c, theta_deg.to_radians(), force).map_err(|e| e.to_string())?;
    let deflection_deg: Vec<f64> = r.chain.deflection.iter().map(|x| x.to_degrees()).collect();
    Ok(json!({
        "regimes": r.regime_summary(),
        "kfe_torque": r.kfe_torque,
        "transmission_ratio": r.transmission_ratio,
        "l4": r.chain.l4,
        "diameter": r.chain.diameter,
        "deflection_deg": deflection_deg,
        "joint_torques": r.joint_torques,
        "joints": r.chain.joints,
        "tip": r.chain.tip,
        "converged": r.converged,
        "residual": r.residual,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn shipped_config() -> String {
    shipped_config_json()
}

#[wasm_bindgen]
pub fn trigger_curve(config_text: &str, theta_deg: f64, f_to: f64, step: f64) -> Result<String, JsError> {
    trigger_curve_json(config_text, theta_deg, f_to, step).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn torque_profile(config_text: &str, force: f64, step_deg: f64) -> Result<String, JsError> {
    torque_profile_json(config_text, force, step_deg).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn solve(config_text: &str, theta_deg: f64, force: f64) -> Result<String, JsError> {
    solve_json(config_text, theta_deg, force).map_err(|e| JsError::new(&e))
}
