use super::sweeps::ratio_step;
use crate::equilibrium::triggering_force;
use crate::error::{Error, Result};
use crate::model::{validate_config, MechanismConfig};

/// Accepted error on the triggering force (N).
pub const TRIGGER_TOLERANCE: f64 = 0.05;
/// Accepted error on the ratio step.
pub const RATIO_STEP_TOLERANCE: f64 = 0.005;
/// Largest per-joint opening limit the scan will try (rad).
const MAX_LIMIT: f64 = std::f64::consts::PI;
/// Largest preload angle the bracket search will try (rad).
const MAX_PRELOAD: f64 = std::f64::consts::PI;
const SCAN_POINTS: usize = 256;
const MAX_BISECTIONS: usize = 200;

/// Triggering force and ratio step of `config` at `theta`.
pub fn measure(config: &MechanismConfig, theta: f64) -> Result<(f64, f64)> {
    Ok((triggering_force(config, theta)?, ratio_step(config, theta)?))
}

/// Fits `alpha_preload` to `target_trigger` and scales `joint_open_limit`
/// uniformly to reach `target_ratio_step`, both at `theta`. Every other field
/// is left alone.
pub fn calibrate(
    config: &MechanismConfig,
    target_trigger: f64,
    target_ratio_step: f64,
    theta: f64,
) -> Result<MechanismConfig> {
    let violations = validate_config(config);
    if !violations.is_empty() {
        return Err(Error::InvalidConfig(violations));
    }
    for (name, v) in [("trigger", target_trigger), ("ratio step", target_ratio_step)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("target {name} must be finite and non-negative, got {v}")));
        }
    }
    let mut out = config.clone();
    out.joint_open_limit = fit_limits(config, target_ratio_step, theta)?;
    out.alpha_preload = fit_preload(&out, target_trigger, theta)?;
    let violations = validate_config(&out);
    if !violations.is_empty() {
        return Err(Error::Calibration(format!(
            "calibrated configuration is invalid: {}",
            Error::InvalidConfig(violations)
        )));
    }
    Ok(out)
}

fn scaled(config: &MechanismConfig, s: f64) -> MechanismConfig {
    let mut c = config.clone();
    for l in &mut c.joint_open_limit {
        *l *= s;
    }
    c
}

/// Ratio step with limits scaled by `s`, or `None` when that configuration
/// is invalid.
fn step_at(config: &MechanismConfig, s: f64, theta: f64) -> Option<f64> {
    let c = scaled(config, s);
    if !validate_config(&c).is_empty() {
        return None;
    }
    ratio_step(&c, theta).ok()
}

fn fit_limits(config: &MechanismConfig, target: f64, theta: f64) -> Result<Vec<f64>> {
    if target == 0.0 {
        return Ok(vec![0.0; config.joint_count()]);
    }
    let widest = config.joint_open_limit.iter().fold(0.0, |m: f64, &l| m.max(l));
    if widest == 0.0 {
        return Err(Error::Calibration("joint_open_limit is all zero, so there is nothing to scale".into()));
    }
    // Scan upward for the first scale whose step reaches the target.
    let cap = MAX_LIMIT / widest;
    let mut lo = (0.0, -target);
    let mut hi = None;
    for i in 1..=SCAN_POINTS {
        let s = cap * i as f64 / SCAN_POINTS as f64;
        match step_at(config, s, theta) {
            Some(v) if v >= target => {
                hi = Some((s, v - target));
                break;
            }
            Some(v) => lo = (s, v - target),
            None => {
                return Err(Error::Calibration(format!(
                    "ratio step {target} unreachable: it is {:.6} at limit scale {:.6} and the \
                     configuration is invalid at scale {s:.6}",
                    lo.1 + target,
                    lo.0
                )))
            }
        }
    }
    let Some(mut hi) = hi else {
        return Err(Error::Calibration(format!(
            "ratio step {target} unreachable: it is {:.6} at the largest limit {MAX_LIMIT:.6} rad",
            lo.1 + target
        )));
    };
    let goal = RATIO_STEP_TOLERANCE / 10.0;
    for _ in 0..MAX_BISECTIONS {
        if hi.1.abs() <= goal {
            break;
        }
        let mid = 0.5 * (lo.0 + hi.0);
        let v = step_at(config, mid, theta).ok_or_else(|| {
            Error::Calibration(format!("configuration invalid at limit scale {mid:.6} inside the bracket"))
        })? - target;
        if v >= 0.0 {
            hi = (mid, v);
        } else {
            lo = (mid, v);
        }
    }
    let best = if hi.1.abs() <= lo.1.abs() { hi } else { lo };
    if best.1.abs() > RATIO_STEP_TOLERANCE {
        return Err(Error::Calibration(format!(
            "ratio step {target} not resolved: bracket [{:.6}, {:.6}] gives steps [{:.6}, {:.6}]",
            lo.0,
            hi.0,
            lo.1 + target,
            hi.1 + target
        )));
    }
    Ok(scaled(config, best.0).joint_open_limit)
}

fn fit_preload(config: &MechanismConfig, target: f64, theta: f64) -> Result<f64> {
    if target == 0.0 {
        return Ok(0.0);
    }
    let mut c = config.clone();
    let mut trigger_at = |a: f64| {
        c.alpha_preload = a;
        triggering_force(&c, theta)
    };
    let mut lo = (0.0, -target);
    let mut a = 1e-3;
    let mut hi = loop {
        let v = trigger_at(a)? - target;
        if v >= 0.0 {
            break (a, v);
        }
        lo = (a, v);
        if a >= MAX_PRELOAD {
            return Err(Error::Calibration(format!(
                "trigger {target} N unreachable: it is {:.6} N at the largest preload {MAX_PRELOAD:.6} rad",
                v + target
            )));
        }
        a = (2.0 * a).min(MAX_PRELOAD);
    };
    let goal = TRIGGER_TOLERANCE / 10.0;
    for _ in 0..MAX_BISECTIONS {
        if hi.1.abs() <= goal {
            break;
        }
        let mid = 0.5 * (lo.0 + hi.0);
        let v = trigger_at(mid)? - target;
        if v >= 0.0 {
            hi = (mid, v);
        } else {
            lo = (mid, v);
        }
    }
    let best = if hi.1.abs() <= lo.1.abs() { hi } else { lo };
    if best.1.abs() > TRIGGER_TOLERANCE {
        return Err(Error::Calibration(format!(
            "trigger {target} N not resolved: preload bracket [{:.6}, {:.6}] rad",
            lo.0, hi.0
        )));
    }
    Ok(best.0)
}
