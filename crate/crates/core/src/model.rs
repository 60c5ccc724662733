//! Configuration and state types shared by every other module.
//!
//! Everything here is SI: metres, newtons, newton-metres and radians. Degrees
//! only appear in the config file and on the command line.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chain;
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::linkage;

/// Largest chain the model supports.
pub const MAX_JOINTS: usize = 6;

/// Side of the ground-pivot/tip line on which the input/coupler pivot sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Positive,
    Negative,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Positive => 1.0,
            Branch::Negative => -1.0,
        }
    }

    pub fn from_sign(sign: i64) -> Option<Branch> {
        match sign {
            1 => Some(Branch::Positive),
            -1 => Some(Branch::Negative),
            _ => None,
        }
    }
}

/// Geometric and elastic parameters of the knee mechanism.
///
/// Frames: the upper-leg frame has the KFE joint at the origin. The lower-leg
/// frame is the upper-leg frame rotated by the KFE angle `theta`; its x axis is
/// the lower-leg centreline, so `beta` is measured from that axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismConfig {
    /// KFE joint to four-bar ground pivot (m).
    pub l1: f64,
    /// Direction of the `l1` frame link in the upper-leg frame (rad).
    pub frame_angle: f64,
    /// Input bar (m).
    pub l2: f64,
    /// Coupler bar (m).
    pub l3: f64,
    pub branch: Branch,
    /// Actuator base point in the upper-leg frame (m).
    pub actuator_base: Vec2,
    /// Attachment position along the input bar, 0 = ground pivot, 1 = coupler pivot.
    pub actuator_attach_ratio: f64,
    /// KFE joint to spring-chain anchor (m).
    pub l_offset: f64,
    /// Anchor direction from the lower-leg axis (rad).
    pub beta: f64,
    /// Segment lengths, one per joint (m).
    pub segments: Vec<f64>,
    /// Fixed joint offsets; the closed chain has joint angles equal to these (rad).
    pub phi: Vec<f64>,
    /// Pre-tension deflection built into every joint (rad).
    pub alpha_preload: f64,
    /// Stiffness of one torsional spring (N·m/rad).
    pub k_spring: f64,
    pub springs_per_joint: u32,
    /// Torsional spring arm (m).
    pub spring_arm_l: f64,
    /// Per-joint travel from closed to the end-stop (rad).
    pub joint_open_limit: Vec<f64>,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl MechanismConfig {
    pub fn joint_count(&self) -> usize {
        self.segments.len()
    }

    pub fn closed_deflection(&self) -> Vec<f64> {
        vec![0.0; self.joint_count()]
    }

    pub fn open_deflection(&self) -> Vec<f64> {
        self.joint_open_limit.clone()
    }

    /// The calibrated configuration shipped with the crate.
    pub fn shipped() -> MechanismConfig {
        crate::config_file::parse_config(crate::config_file::SHIPPED_CONFIG)
            .expect("shipped config must parse")
    }
}

/// One violated configuration invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Per-joint state of the spring chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    Closed,
    Active,
    EndStop,
}

impl Regime {
    pub fn symbol(self) -> char {
        match self {
            Regime::Closed => 'C',
            Regime::Active => 'A',
            Regime::EndStop => 'E',
        }
    }

    pub fn classify(deflection: f64, limit: f64) -> Regime {
        if deflection <= 0.0 {
            Regime::Closed
        } else if deflection >= limit {
            Regime::EndStop
        } else {
            Regime::Active
        }
    }
}

/// Deflected spring chain and its derived geometry, in the lower-leg frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub deflection: Vec<f64>,
    pub regime: Vec<Regime>,
    /// Joint pivots; `joints[0]` is the anchor.
    pub joints: Vec<Vec2>,
    pub tip: Vec2,
    pub l4: f64,
    /// Anchor-to-tip distance.
    pub diameter: f64,
    /// Joint-to-tip distances `r_i`.
    pub moment_arm: Vec<f64>,
    /// Angle from each joint-to-tip vector to the tip load direction.
    pub gamma: Vec<f64>,
    /// Unit direction of the load applied at the tip.
    pub load_direction: Vec2,
    /// Orientation of the knee-to-tip link relative to the last segment.
    pub theta_l4: f64,
}

impl ChainState {
    /// Geometry for `deflection`, with the tip load taken perpendicular to
    /// the knee-to-tip link (the direction of a pure knee moment).
    pub fn new(config: &MechanismConfig, deflection: &[f64]) -> Result<ChainState> {
        let tip = chain::chain_tip(config, deflection)?;
        Self::with_load_direction(config, deflection, tip.perp())
    }

    pub fn with_load_direction(
        config: &MechanismConfig,
        deflection: &[f64],
        load_direction: Vec2,
    ) -> Result<ChainState> {
        let pose = chain::pose(config, deflection)?;
        let (moment_arm, gamma) = chain::moment_geometry_from_pose(&pose, load_direction);
        let regime = deflection
            .iter()
            .zip(&config.joint_open_limit)
            .map(|(&d, &lim)| Regime::classify(d, lim))
            .collect();
        let last_dir = pose.tip - pose.joints[pose.joints.len() - 1];
        let theta_l4 = wrap_angle(pose.tip.angle() - last_dir.angle());
        let n = load_direction.norm();
        Ok(ChainState {
            deflection: deflection.to_vec(),
            regime,
            l4: pose.tip.norm(),
            diameter: pose.tip.distance(pose.joints[0]),
            tip: pose.tip,
            joints: pose.joints,
            moment_arm,
            gamma,
            load_direction: load_direction * (1.0 / n),
            theta_l4,
        })
    }
}

/// Four-bar pose at one KFE angle, in the upper-leg frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkageState {
    pub theta: f64,
    pub knee: Vec2,
    pub ground: Vec2,
    /// Input/coupler pivot.
    pub input_pivot: Vec2,
    /// Coupler/output pivot, the spring-chain tip.
    pub tip: Vec2,
    pub actuator_base: Vec2,
    pub actuator_attach: Vec2,
    pub actuator_length: f64,
    /// d(actuator length)/d(theta) at fixed chain shape (m/rad).
    pub jacobian: f64,
    /// Gradient of the actuator length with respect to the tip position; this
    /// is the load the coupler puts on the tip per newton of actuator force.
    pub tip_gradient: Vec2,
    pub branch: Branch,
    /// Sine of the angle between input bar and coupler.
    pub sin_transmission: f64,
}

impl LinkageState {
    /// Pivot positions in the order knee, ground, input/coupler, tip.
    pub fn pivots(&self) -> [Vec2; 4] {
        [self.knee, self.ground, self.input_pivot, self.tip]
    }

    /// Largest deviation of the pivot distances from the link lengths.
    pub fn closure_residual(&self, config: &MechanismConfig) -> f64 {
        let l4 = self.tip.norm();
        [
            (self.ground.distance(self.knee) - config.l1).abs(),
            (self.input_pivot.distance(self.ground) - config.l2).abs(),
            (self.tip.distance(self.input_pivot) - config.l3).abs(),
            (self.tip.distance(self.knee) - l4).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Converged quasi-static state at a locked KFE angle.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub theta: f64,
    pub chain: ChainState,
    pub linkage: LinkageState,
    pub input_force: f64,
    /// KFE torque (N·m).
    pub kfe_torque: f64,
    /// Equivalent tip force `T / l4` (N).
    pub tip_force: f64,
    /// Magnitude of the coupler force acting on the tip (N).
    pub coupler_force: f64,
    /// `T / F_cyl` (m).
    pub transmission_ratio: f64,
    /// Joint torques `T_si` at the returned state (N·m).
    pub joint_torques: Vec<f64>,
    /// Stored spring energy minus actuator work (J).
    pub energy: f64,
    pub converged: bool,
    /// Largest complementarity violation (N·m).
    pub residual: f64,
    pub iterations: usize,
}

impl EquilibriumResult {
    pub fn regime_summary(&self) -> String {
        self.chain.regime.iter().map(|r| r.symbol()).collect()
    }
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut w = a % two_pi;
    if w > std::f64::consts::PI {
        w -= two_pi;
    } else if w <= -std::f64::consts::PI {
        w += two_pi;
    }
    w
}

/// Stiffness of one chain joint: its parallel springs add.
pub fn per_joint_stiffness(config: &MechanismConfig) -> f64 {
    f64::from(config.springs_per_joint) * config.k_spring
}

/// Series stiffness of the whole chain, `1/k_total = sum 1/k_joint`.
pub fn total_stiffness(config: &MechanismConfig) -> Result<f64> {
    series_stiffness(&vec![per_joint_stiffness(config); config.joint_count()])
}

pub fn series_stiffness(joint_stiffness: &[f64]) -> Result<f64> {
    if joint_stiffness.is_empty() {
        return Err(Error::InvalidConfig(vec![Violation::new(
            "segments",
            "chain has no joints",
        )]));
    }
    let mut compliance = 0.0;
    for (i, &k) in joint_stiffness.iter().enumerate() {
        if !(k > 0.0) {
            return Err(Error::InvalidConfig(vec![Violation::new(
                format!("joint[{i}]"),
                format!("stiffness {k} must be positive"),
            )]));
        }
        compliance += 1.0 / k;
    }
    Ok(1.0 / compliance)
}

const VALIDATION_THETA_SAMPLES: usize = 400;

/// Every violated invariant of `config`; empty means valid.
pub fn validate_config(config: &MechanismConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut positive = |name: &str, v: f64| {
        if !(v > 0.0 && v.is_finite()) {
            out.push(Violation::new(name, format!("must be positive and finite, got {v}")));
        }
    };
    positive("l1", config.l1);
    positive("l2", config.l2);
    positive("l3", config.l3);
    positive("L_offset", config.l_offset);
    positive("spring_arm_L", config.spring_arm_l);
    positive("k_spring", config.k_spring);
    for (i, &s) in config.segments.iter().enumerate() {
        positive(&format!("segments[{i}]"), s);
    }

    let finite = [
        ("frame_angle", config.frame_angle),
        ("beta", config.beta),
        ("actuator_base.x", config.actuator_base.x),
        ("actuator_base.y", config.actuator_base.y),
    ];
    for (name, v) in finite {
        if !v.is_finite() {
            out.push(Violation::new(name, "must be finite"));
        }
    }
    if !(0.0..=1.0).contains(&config.actuator_attach_ratio) {
        out.push(Violation::new(
            "actuator_attach_ratio",
            format!("must lie in [0, 1], got {}", config.actuator_attach_ratio),
        ));
    }

    let n = config.segments.len();
    if n == 0 || n > MAX_JOINTS {
        out.push(Violation::new(
            "segments",
            format!("expected 1 to {MAX_JOINTS} entries, got {n}"),
        ));
    }
    if config.phi.len() != n {
        out.push(Violation::new(
            "phi",
            format!("expected {n} entries (one per segment), got {}", config.phi.len()),
        ));
    } else if config.phi.iter().any(|p| !p.is_finite()) {
        out.push(Violation::new("phi", "entries must be finite"));
    }
    if config.joint_open_limit.len() != n {
        out.push(Violation::new(
            "joint_open_limit",
            format!(
                "expected {n} entries (one per segment), got {}",
                config.joint_open_limit.len()
            ),
        ));
    } else {
        for (i, &lim) in config.joint_open_limit.iter().enumerate() {
            if !(lim >= 0.0 && lim.is_finite()) {
                out.push(Violation::new(
                    format!("joint_open_limit[{i}]"),
                    format!("must be non-negative, got {lim}"),
                ));
            }
        }
    }

    if config.springs_per_joint < 1 {
        out.push(Violation::new("springs_per_joint", "must be at least 1"));
    }
    if !(config.alpha_preload >= 0.0 && config.alpha_preload.is_finite()) {
        out.push(Violation::new(
            "alpha_preload",
            format!("must be non-negative, got {}", config.alpha_preload),
        ));
    }

    let pi = std::f64::consts::PI;
    let range_ok = config.theta_min < config.theta_max;
    if !range_ok {
        out.push(Violation::new(
            "theta_min/theta_max",
            format!(
                "range is empty: theta_min {} >= theta_max {}",
                config.theta_min, config.theta_max
            ),
        ));
    }
    for (name, v) in [("theta_min", config.theta_min), ("theta_max", config.theta_max)] {
        if !(v > -pi && v <= 0.0) {
            out.push(Violation::new(name, format!("must lie in (-pi, 0], got {v}")));
        }
    }

    // Closure only makes sense once the shape checks above pass.
    if out.is_empty() {
        for (label, deflection) in [
            ("closed", config.closed_deflection()),
            ("fully-open", config.open_deflection()),
        ] {
            let tip = match chain::chain_tip(config, &deflection) {
                Ok(t) => t,
                Err(e) => {
                    out.push(Violation::new("segments", e.to_string()));
                    continue;
                }
            };
            for i in 0..=VALIDATION_THETA_SAMPLES {
                let t = i as f64 / VALIDATION_THETA_SAMPLES as f64;
                let theta = config.theta_min + t * (config.theta_max - config.theta_min);
                if let Err(e) = linkage::closure_at_tip(config, theta, tip) {
                    out.push(Violation::new(
                        "closure",
                        format!("{label} chain: {e}"),
                    ));
                    break;
                }
            }
        }
    }
    out
}
