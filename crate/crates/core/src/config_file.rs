//! JSON config file: `MechanismConfig` field names, angles in degrees.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::model::{validate_config, Branch, MechanismConfig};

/// The calibrated default configuration.
pub const SHIPPED_CONFIG: &str = include_str!("../data/default_config.json");

/// Where a config came from; written by `calibrate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub generated_by: String,
    pub note: String,
    pub theta_deg: f64,
    pub target_trigger_n: f64,
    pub trigger_tolerance_n: f64,
    pub target_ratio_step: f64,
    pub ratio_step_tolerance: f64,
    pub achieved_trigger_n: f64,
    pub achieved_ratio_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
    l1: f64,
    frame_angle: f64,
    l2: f64,
    l3: f64,
    assembly_branch: i64,
    actuator_base: [f64; 2],
    actuator_attach_ratio: f64,
    #[serde(rename = "L_offset")]
    l_offset: f64,
    beta: f64,
    segments: Vec<f64>,
    phi: Vec<f64>,
    alpha_preload: f64,
    k_spring: f64,
    springs_per_joint: u32,
    #[serde(rename = "spring_arm_L")]
    spring_arm_l: f64,
    joint_open_limit: Vec<f64>,
    theta_min: f64,
    theta_max: f64,
}

fn degrees(v: &[f64]) -> Vec<f64> {
    v.iter().map(|a| a.to_degrees()).collect()
}

fn radians(v: &[f64]) -> Vec<f64> {
    v.iter().map(|a| a.to_radians()).collect()
}

impl ConfigDocument {
    fn into_config(self) -> std::result::Result<MechanismConfig, String> {
        let branch = Branch::from_sign(self.assembly_branch).ok_or_else(|| {
            format!("assembly_branch: expected 1 or -1, got {}", self.assembly_branch)
        })?;
        Ok(MechanismConfig {
            l1: self.l1,
            frame_angle: self.frame_angle.to_radians(),
            l2: self.l2,
            l3: self.l3,
            branch,
            actuator_base: Vec2::new(self.actuator_base[0], self.actuator_base[1]),
            actuator_attach_ratio: self.actuator_attach_ratio,
            l_offset: self.l_offset,
            beta: self.beta.to_radians(),
            segments: self.segments,
            phi: radians(&self.phi),
            alpha_preload: self.alpha_preload.to_radians(),
            k_spring: self.k_spring,
            springs_per_joint: self.springs_per_joint,
            spring_arm_l: self.spring_arm_l,
            joint_open_limit: radians(&self.joint_open_limit),
            theta_min: self.theta_min.to_radians(),
            theta_max: self.theta_max.to_radians(),
        })
    }

    fn from_config(c: &MechanismConfig, provenance: Option<Provenance>) -> Self {
        ConfigDocument {
            provenance,
            l1: c.l1,
            frame_angle: c.frame_angle.to_degrees(),
            l2: c.l2,
            l3: c.l3,
            assembly_branch: c.branch.sign() as i64,
            actuator_base: [c.actuator_base.x, c.actuator_base.y],
            actuator_attach_ratio: c.actuator_attach_ratio,
            l_offset: c.l_offset,
            beta: c.beta.to_degrees(),
            segments: c.segments.clone(),
            phi: degrees(&c.phi),
            alpha_preload: c.alpha_preload.to_degrees(),
            k_spring: c.k_spring,
            springs_per_joint: c.springs_per_joint,
            spring_arm_l: c.spring_arm_l,
            joint_open_limit: degrees(&c.joint_open_limit),
            theta_min: c.theta_min.to_degrees(),
            theta_max: c.theta_max.to_degrees(),
        }
    }
}

/// Parses a config document without validating it.
pub fn parse_config(text: &str) -> std::result::Result<MechanismConfig, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: ConfigDocument = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path.is_empty() || path == "." {
            inner.to_string()
        } else {
            format!("field `{path}`: {inner}")
        }
    })?;
    doc.into_config()
}

pub fn parse_provenance(text: &str) -> Option<Provenance> {
    serde_json::from_str::<ConfigDocument>(text).ok()?.provenance
}

/// Reads, converts and validates a config file.
pub fn load_config(path: &Path) -> Result<MechanismConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let config = parse_config(&text).map_err(|message| Error::ConfigFile {
        path: path.to_path_buf(),
        message,
    })?;
    let violations = validate_config(&config);
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(Error::InvalidConfig(violations))
    }
}

/// Pretty JSON with a trailing newline; stable for identical inputs.
pub fn to_json(config: &MechanismConfig, provenance: Option<Provenance>) -> String {
    let mut s = serde_json::to_string_pretty(&ConfigDocument::from_config(config, provenance))
        .expect("config document serialises");
    s.push('\n');
    s
}

pub fn save_config(config: &MechanismConfig, provenance: Option<Provenance>, path: &Path) -> Result<usize> {
    let text = to_json(config, provenance);
    std::fs::write(path, &text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shipped_with(edit: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut v: serde_json::Value = serde_json::from_str(SHIPPED_CONFIG).unwrap();
        edit(&mut v);
        serde_json::to_string_pretty(&v).unwrap()
    }

    #[test]
    fn shipped_config_parses_and_converts_degrees() {
        let c = parse_config(SHIPPED_CONFIG).unwrap();
        let raw: serde_json::Value = serde_json::from_str(SHIPPED_CONFIG).unwrap();
        let theta_min = raw["theta_min"].as_f64().unwrap();
        assert!((c.theta_min - theta_min.to_radians()).abs() < 1e-15);
        assert_eq!(c.joint_count(), 6);
        assert!(parse_provenance(SHIPPED_CONFIG).is_some());
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let text = shipped_with(|v| {
            v["l5"] = serde_json::json!(0.1);
        });
        let err = parse_config(&text).unwrap_err();
        assert!(err.contains("l5"), "{err}");
    }

    #[test]
    fn wrong_type_names_the_field() {
        let text = shipped_with(|v| {
            v["beta"] = serde_json::json!("ten");
        });
        let err = parse_config(&text).unwrap_err();
        assert!(err.contains("beta"), "{err}");
    }

    #[test]
    fn missing_field_is_reported() {
        let text = shipped_with(|v| {
            v.as_object_mut().unwrap().remove("l3");
        });
        let err = parse_config(&text).unwrap_err();
        assert!(err.contains("l3"), "{err}");
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_config("{\n  \"l1\": 0.1,\n  oops\n}").unwrap_err();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn bad_branch_is_rejected() {
        let text = shipped_with(|v| {
            v["assembly_branch"] = serde_json::json!(0);
        });
        assert!(parse_config(&text).unwrap_err().contains("assembly_branch"));
    }

    #[test]
    fn json_round_trip_is_stable() {
        let c = MechanismConfig::shipped();
        let text = to_json(&c, None);
        let back = parse_config(&text).unwrap();
        assert_eq!(to_json(&back, None), text);
        for (a, b) in c.phi.iter().zip(&back.phi) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
