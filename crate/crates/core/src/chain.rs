//! Pre-tensioned spring chain: forward kinematics, joint torques and preload.
//!
//! Joint `k` sits at the proximal end of segment `k`; joint 0 is the anchor at
//! `L_offset` along `beta`. Joint angles are `alpha_k = phi_k + deflection_k`
//! and accumulate along the chain. Positive deflection opens a joint
//! (counter-clockwise in the lower-leg frame).

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::model::{per_joint_stiffness, MechanismConfig};

/// Joint pivots and tip for one deflection vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPose {
    pub joints: Vec<Vec2>,
    pub tip: Vec2,
}

impl ChainPose {
    pub fn anchor(&self) -> Vec2 {
        self.joints[0]
    }

    /// d(tip)/d(deflection_k) for every joint.
    pub fn tip_jacobian(&self) -> Vec<Vec2> {
        self.joints.iter().map(|&p| (self.tip - p).perp()).collect()
    }
}

fn check_deflection(config: &MechanismConfig, deflection: &[f64]) -> Result<()> {
    let n = config.joint_count();
    if deflection.len() != n || config.phi.len() != n || config.joint_open_limit.len() != n {
        return Err(Error::Domain(format!(
            "deflection has {} entries, chain has {n} joints",
            deflection.len()
        )));
    }
    for (k, (&d, &lim)) in deflection.iter().zip(&config.joint_open_limit).enumerate() {
        if !(d >= 0.0 && d <= lim) {
            return Err(Error::Domain(format!(
                "deflection[{k}] = {d} outside [0, {lim}]"
            )));
        }
    }
    Ok(())
}

/// Cumulative-angle forward kinematics; no bounds check.
pub(crate) fn pose_unchecked(config: &MechanismConfig, deflection: &[f64]) -> ChainPose {
    let mut p = Vec2::polar(config.l_offset, config.beta);
    let mut angle = config.beta;
    let mut joints = Vec::with_capacity(deflection.len());
    for ((&s, &phi), &d) in config.segments.iter().zip(&config.phi).zip(deflection) {
        joints.push(p);
        angle += phi + d;
        p = p + Vec2::polar(s, angle);
    }
    ChainPose { joints, tip: p }
}

pub fn pose(config: &MechanismConfig, deflection: &[f64]) -> Result<ChainPose> {
    check_deflection(config, deflection)?;
    Ok(pose_unchecked(config, deflection))
}

/// Tip position `(x_l4, y_l4)` in the lower-leg frame.
pub fn chain_tip(config: &MechanismConfig, deflection: &[f64]) -> Result<Vec2> {
    Ok(pose(config, deflection)?.tip)
}

/// Knee-to-tip distance `l4`.
pub fn l4_length(config: &MechanismConfig, deflection: &[f64]) -> Result<f64> {
    Ok(chain_tip(config, deflection)?.norm())
}

/// Anchor-to-tip distance, the "diameter" of the spring component.
pub fn chain_diameter(config: &MechanismConfig, deflection: &[f64]) -> Result<f64> {
    let pose = pose(config, deflection)?;
    Ok(pose.tip.distance(pose.anchor()))
}

/// Moment arms `r_i` and angles `gamma_i` between each joint-to-tip vector
/// and the load direction.
pub fn moment_geometry(
    config: &MechanismConfig,
    deflection: &[f64],
    load_direction: Vec2,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(load_direction.norm() > 0.0) {
        return Err(Error::Domain("load direction must be non-zero".into()));
    }
    Ok(moment_geometry_from_pose(&pose(config, deflection)?, load_direction))
}

pub(crate) fn moment_geometry_from_pose(
    pose: &ChainPose,
    load_direction: Vec2,
) -> (Vec<f64>, Vec<f64>) {
    pose.joints
        .iter()
        .map(|&p| {
            let r = pose.tip - p;
            let gamma = r.cross(load_direction).atan2(r.dot(load_direction));
            (r.norm(), gamma)
        })
        .unzip()
}

/// Opening torque at every joint for a force `load` applied at the tip:
/// `T_si = r_i sin(gamma_i) |F|`.
pub fn joint_torques(config: &MechanismConfig, deflection: &[f64], load: Vec2) -> Result<Vec<f64>> {
    if !(load.x.is_finite() && load.y.is_finite()) {
        return Err(Error::Domain("tip load must be finite".into()));
    }
    let magnitude = load.norm();
    if magnitude == 0.0 {
        check_deflection(config, deflection)?;
        return Ok(vec![0.0; deflection.len()]);
    }
    let (r, gamma) = moment_geometry(config, deflection, load)?;
    Ok(r.iter()
        .zip(&gamma)
        .map(|(&r, &g)| r * g.sin() * magnitude)
        .collect())
}

/// Torque a joint must exceed before it starts to open (1-based index).
pub fn preload_threshold(config: &MechanismConfig, joint_index: usize) -> Result<f64> {
    if joint_index == 0 || joint_index > config.joint_count() {
        return Err(Error::Domain(format!(
            "joint index {joint_index} outside 1..={}",
            config.joint_count()
        )));
    }
    Ok(per_joint_stiffness(config) * config.alpha_preload)
}

/// Force on the spring arm for a torsional spring deflected by `delta`.
pub fn preload_force(k_spring: f64, delta: f64, arm_l: f64) -> Result<f64> {
    if !(arm_l > 0.0) {
        return Err(Error::Domain(format!("spring arm must be positive, got {arm_l}")));
    }
    Ok(k_spring * delta / arm_l)
}

/// Deflections at fraction `s` of the uniform opening ray (`s` in [0, 1]).
pub fn opening_ray(config: &MechanismConfig, s: f64) -> Vec<f64> {
    let s = s.clamp(0.0, 1.0);
    config
        .joint_open_limit
        .iter()
        .map(|&lim| if s >= 1.0 { lim } else { s * lim })
        .collect()
}

/// Point on the opening ray whose tip has knee distance `l4`.
///
/// Returns the ray fraction and the tip. Requires `l4` between the closed and
/// fully-open values; the ray is assumed monotone in `l4`.
pub fn tip_for_l4(config: &MechanismConfig, l4: f64) -> Result<(f64, Vec2)> {
    let closed = pose(config, &config.closed_deflection())?.tip;
    let open = pose(config, &config.open_deflection())?.tip;
    let (lo_l4, hi_l4) = (closed.norm(), open.norm());
    let tol = 1e-12 * hi_l4.max(1.0);
    if (l4 - lo_l4).abs() <= tol {
        return Ok((0.0, closed));
    }
    if (l4 - hi_l4).abs() <= tol {
        return Ok((1.0, open));
    }
    if !(l4 > lo_l4 && l4 < hi_l4) {
        return Err(Error::Domain(format!(
            "l4 = {l4} outside the chain range [{lo_l4}, {hi_l4}]"
        )));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let t = pose_unchecked(config, &opening_ray(config, mid)).tip.norm();
        if t < l4 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    Ok((s, pose_unchecked(config, &opening_ray(config, s)).tip))
}
